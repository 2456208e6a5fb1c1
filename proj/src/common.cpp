#include "invcast/common.hpp"

#include <mutex>
#include <set>

namespace invcast {

void warn_once(const std::string& msg) {
    static std::mutex mutex;
    static std::set<std::string> seen;
    {
        std::lock_guard<std::mutex> lock(mutex);
        if (!seen.insert(msg).second) return;
    }
    warn(msg);
}

}  // namespace invcast
