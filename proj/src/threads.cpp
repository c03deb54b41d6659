#include "kpshift/threads.hpp"

#include <cstdlib>
#include <string>

#include "kpshift/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kpshift {

int apply_thread_count(int requested) {
    int n = requested;
    if (const char* env = std::getenv("KPSHIFT_THREADS")) {
        std::size_t used = 0;
        int parsed = 0;
        try {
            parsed = std::stoi(env, &used);
        } catch (const std::exception&) {
            throw ConfigError("KPSHIFT_THREADS must be an integer");
        }
        if (used != std::string(env).size())
            throw ConfigError("KPSHIFT_THREADS must be an integer");
        n = parsed;
    }
    if (n < 1) throw ConfigError("thread count must be at least 1");
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
    return n;
}

}  // namespace kpshift
