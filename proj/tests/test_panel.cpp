#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "invcast/csvio.hpp"
#include "invcast/panel.hpp"

using namespace invcast;

namespace {

std::string temp_file(const std::string& name, const std::string& content) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("synth: degenerate generator gives a constant panel") {
    const DemandPanel p = synth_seasonal(2, 8, 4, 10.0, 0.0, 0.0, 0.0, 1);
    for (int i = 0; i < p.n(); ++i)
        for (int t = 0; t < p.t_len(); ++t) CHECK(p.at(i, t) == 10.0);
}

TEST_CASE("synth: noiseless values follow the clamped sine-plus-trend form") {
    const double base = 20.0, amp = 18.0, trend = -0.4;
    const DemandPanel p = synth_seasonal(2, 30, 7, base, amp, trend, 0.0, 4);
    for (int i = 0; i < p.n(); ++i)
        for (int t = 0; t < p.t_len(); ++t) {
            const double expect = std::max(
                0.0, base + amp * std::sin(2.0 * M_PI * t / 7.0) + trend * t);
            CHECK(p.at(i, t) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("synth: noiseless panel is exactly periodic") {
    const DemandPanel p = synth_seasonal(3, 20, 4, 50.0, 10.0, 0.0, 0.0, 2);
    for (int i = 0; i < p.n(); ++i)
        for (int t = 0; t + 4 < p.t_len(); ++t)
            CHECK(p.at(i, t) == doctest::Approx(p.at(i, t + 4)).epsilon(1e-15));
}

TEST_CASE("synth: noiseless panel with trend is periodic after detrending") {
    const double trend = 0.7;
    const DemandPanel p = synth_seasonal(2, 24, 6, 40.0, 8.0, trend, 0.0, 3);
    for (int i = 0; i < p.n(); ++i)
        for (int t = 0; t + 6 < p.t_len(); ++t)
            CHECK(p.at(i, t) - trend * t ==
                  doctest::Approx(p.at(i, t + 6) - trend * (t + 6)).epsilon(1e-12));
}

TEST_CASE("synth: seed determinism") {
    const DemandPanel a = synth_seasonal(4, 30, 12, 100.0, 20.0, 0.1, 5.0, 42);
    const DemandPanel b = synth_seasonal(4, 30, 12, 100.0, 20.0, 0.1, 5.0, 42);
    const DemandPanel c = synth_seasonal(4, 30, 12, 100.0, 20.0, 0.1, 5.0, 43);
    CHECK(a.values.data() == b.values.data());
    CHECK(a.values.data() != c.values.data());
}

TEST_CASE("synth: precondition violations") {
    CHECK_THROWS_AS(synth_seasonal(0, 10, 4, 10, 0, 0, 0, 1), Error);
    CHECK_THROWS_AS(synth_seasonal(1, 10, 4, 10, 0, 0, -1.0, 1), Error);
    CHECK_THROWS_AS(synth_seasonal(1, 10, 4, 5.0, 6.0, 0, 0, 1), Error);  // base <= amplitude
}

TEST_CASE("ingest wide: direct read-back") {
    const auto path = temp_file("invcast_wide.csv",
                                "series_id,d0,d1,d2,d3,d4\n"
                                "A,1,2,3,4,5\n"
                                "B,6,7,8,9,10\n");
    const DemandPanel p = ingest_csv(path, CsvSchema::Wide, 2, {2, 5});
    CHECK(p.n() == 2);
    CHECK(p.t_len() == 5);
    for (int i = 0; i < 2; ++i)
        for (int t = 0; t < 5; ++t) CHECK(p.valid(i, t));
    CHECK(p.at(0, 0) == 1.0);
    CHECK(p.at(1, 4) == 10.0);
}

TEST_CASE("ingest long: ragged series are front-padded") {
    const auto path = temp_file("invcast_long.csv",
                                "series_id,t,demand\n"
                                "A,0,1\nA,1,2\nA,2,3\nA,3,4\nA,4,5\n"
                                "B,0,7\nB,1,8\nB,2,9\n");
    const DemandPanel p = ingest_csv(path, CsvSchema::Long, 2, {2, 5});
    CHECK(p.n() == 2);
    CHECK(p.t_len() == 5);
    // B has 3 points: masked at its 2 front pads.
    CHECK_FALSE(p.valid(1, 0));
    CHECK_FALSE(p.valid(1, 1));
    CHECK(p.at(1, 0) == 0.0);
    CHECK(p.valid(1, 2));
    CHECK(p.at(1, 2) == 7.0);
    CHECK(p.at(1, 4) == 9.0);
    CHECK(p.valid_start(1) == 2);
    CHECK(p.valid_start(0) == 0);
}

TEST_CASE("ingest long: duplicate key names the offender") {
    const auto path = temp_file("invcast_dup.csv",
                                "series_id,t,demand\n"
                                "A,0,1\nA,1,2\nA,1,3\n");
    try {
        ingest_csv(path, CsvSchema::Long, 2, {1, 2});
        FAIL("expected duplicate-key error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("duplicate") != std::string::npos);
        CHECK(msg.find("series_id=A") != std::string::npos);
        CHECK(msg.find("t=1") != std::string::npos);
    }
}

TEST_CASE("ingest long: non-monotone t is rejected") {
    const auto path = temp_file("invcast_mono.csv",
                                "series_id,t,demand\n"
                                "A,2,1\nA,1,2\n");
    try {
        ingest_csv(path, CsvSchema::Long, 2, {1, 2});
        FAIL("expected non-monotone error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("non-monotone") != std::string::npos);
    }
}

TEST_CASE("ingest: malformed row carries the line number") {
    const auto path = temp_file("invcast_bad.csv",
                                "series_id,t,demand\n"
                                "A,0,1\nA,1,not_a_number\n");
    try {
        ingest_csv(path, CsvSchema::Long, 2, {1, 2});
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
}

TEST_CASE("round trip: ingest(emit(panel)) is bit-exact in both schemas") {
    const DemandPanel synth = synth_seasonal(3, 17, 5, 80.0, 11.0, 0.31, 4.5, 1234);

    for (const CsvSchema schema : {CsvSchema::Wide, CsvSchema::Long}) {
        const auto path = temp_file("invcast_rt.csv", emit_csv(synth, schema));
        const DemandPanel back =
            ingest_csv(path, schema, synth.period, {synth.train_cutoff, synth.val_cutoff});
        REQUIRE(back.n() == synth.n());
        REQUIRE(back.t_len() == synth.t_len());
        CHECK(back.series_ids == synth.series_ids);
        CHECK(back.values.data() == synth.values.data());
        CHECK(back.mask == synth.mask);
    }

    // A ragged panel round-trips too (its canonical form is end-aligned).
    const auto ragged = temp_file("invcast_rag.csv",
                                  "series_id,t,demand\n"
                                  "A,0,1.25\nA,1,2.5\nA,2,3.75\nA,3,5.125\n"
                                  "B,5,7.0625\nB,7,9.5\n");
    const DemandPanel p = ingest_csv(ragged, CsvSchema::Long, 2, {1, 4});
    for (const CsvSchema schema : {CsvSchema::Wide, CsvSchema::Long}) {
        const auto path = temp_file("invcast_rt2.csv", emit_csv(p, schema));
        const DemandPanel back = ingest_csv(path, schema, p.period, {1, 4});
        CHECK(back.values.data() == p.values.data());
        CHECK(back.mask == p.mask);
    }
}

TEST_CASE("panel invariants: cutoffs and masked zeros") {
    DemandPanel p = synth_seasonal(2, 10, 2, 10.0, 1.0, 0.0, 0.0, 9);
    CHECK_THROWS_AS(p.set_cutoffs(0, 5), Error);
    CHECK_THROWS_AS(p.set_cutoffs(5, 5), Error);
    CHECK_THROWS_AS(p.set_cutoffs(5, 11), Error);
    p.set_cutoffs(4, 8);
    p.validate();
    p.values.at(0, 0) = 3.0;
    p.mask[0] = 0;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("covariate sidecar aligns by (series_id, t)") {
    const auto dpath = temp_file("invcast_cov_d.csv",
                                 "series_id,t,demand\n"
                                 "A,0,1\nA,1,2\nA,2,3\n"
                                 "B,0,4\nB,1,5\nB,2,6\n");
    const DemandPanel p = ingest_csv(dpath, CsvSchema::Long, 2, {1, 3});
    const auto cpath = temp_file("invcast_cov.csv",
                                 "series_id,t,num_price,cat_dow\n"
                                 "A,0,1.5,0\nA,1,1.75,1\nA,2,2.0,2\n"
                                 "B,0,3.5,1\nB,1,3.25,2\nB,2,3.0,0\n");
    const CovariatePanel cov = ingest_covariates_csv(cpath, p);
    CHECK(cov.n_numeric() == 1);
    CHECK(cov.n_categorical() == 1);
    CHECK(cov.cardinalities[0] == 3);
    CHECK(cov.numeric_at(0, 1, 0) == 1.75);
    CHECK(cov.categorical_at(1, 2, 0) == 0);

    // A file mentioning an unknown series is rejected.
    const auto bad = temp_file("invcast_cov_bad.csv",
                               "series_id,t,num_x\nZZZ,0,1\n");
    CHECK_THROWS_AS(ingest_covariates_csv(bad, p), Error);
}
