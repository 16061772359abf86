#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "gc2po/parallel.hpp"
#include "gc2po/rng.hpp"

using namespace gc2po;

TEST_CASE("parallel_for fills slots identically to the serial reference") {
    const int n = 64;
    auto work = [&](int threads) {
        std::vector<double> out(static_cast<size_t>(n), 0.0);
        parallel_for(n, threads, [&](int i) {
            Rng rng(derive_seed(5, static_cast<std::uint64_t>(i)));
            double acc = 0.0;
            for (int k = 0; k < 100 + 37 * i; ++k) acc += std::sin(rng.uniform()) * 1e-3;
            out[static_cast<size_t>(i)] = acc;
        });
        return out;
    };
    const auto serial = work(1);
    CHECK(work(0) == serial);
    CHECK(work(2) == serial);
    CHECK(work(3) == serial);
}

TEST_CASE("exceptions rethrow deterministically by lowest index") {
    auto run = [&](int threads) {
        std::string caught;
        try {
            parallel_for(8, threads, [&](int i) {
                if (i == 3 || i == 6) throw std::runtime_error("boom " + std::to_string(i));
            });
        } catch (const std::runtime_error& e) {
            caught = e.what();
        }
        return caught;
    };
    CHECK(run(1) == "boom 3");
    CHECK(run(0) == "boom 3");
}

TEST_CASE("degenerate sizes") {
    int calls = 0;
    parallel_for(0, 0, [&](int) { ++calls; });
    CHECK(calls == 0);
    parallel_for(1, 0, [&](int i) { calls += i + 1; });
    CHECK(calls == 1);
}
