#include "invcast/csvio.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "invcast/common.hpp"

namespace invcast {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open file: %s", path.c_str());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string fmt_double(double v) {
    // %.17g always round-trips an IEEE double exactly; try shorter forms
    // first so files stay readable where precision allows.
    char buf[40];
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& context) {
    require(!s.empty(), "%s: empty numeric field", context.c_str());
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    require(errno == 0 && end == s.c_str() + s.size(), "%s: malformed number '%s'",
            context.c_str(), s.c_str());
    return v;
}

long parse_long(const std::string& s, const std::string& context) {
    require(!s.empty(), "%s: empty integer field", context.c_str());
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(s.c_str(), &end, 10);
    require(errno == 0 && end == s.c_str() + s.size(), "%s: malformed integer '%s'",
            context.c_str(), s.c_str());
    return v;
}

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "cannot open file for writing: %s", tmp.c_str());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        require(out.good(), "write failed: %s", tmp.c_str());
    }
    require(std::rename(tmp.c_str(), path.c_str()) == 0, "rename %s -> %s failed", tmp.c_str(),
            path.c_str());
}

}  // namespace invcast
