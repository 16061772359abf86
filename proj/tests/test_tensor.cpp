#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "gc2po/rng.hpp"
#include "gc2po/tensor.hpp"

using namespace gc2po;

namespace {

using BuildFn = std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

double eval_scalar(const std::vector<Tensor>& inputs, const BuildFn& build) {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t, true));
    return tape.value(build(tape, ids)).values[0];
}

/// Central finite differences against the tape's reverse-mode gradients.
void check_gradients(const std::vector<Tensor>& inputs, const BuildFn& build, double tol = 1e-4) {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t, true));
    const auto root = build(tape, ids);
    REQUIRE(tape.value(root).is_scalar());
    tape.backward(root);

    const double h = 1e-5;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor analytic = tape.grad(ids[i]);
        for (size_t j = 0; j < inputs[i].values.size(); ++j) {
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[i].values[j] += h;
            minus[i].values[j] -= h;
            const double numeric = (eval_scalar(plus, build) - eval_scalar(minus, build)) / (2.0 * h);
            const double a = analytic.values[j];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            INFO("input ", i, " element ", j, " analytic ", a, " numeric ", numeric);
            CHECK(rel <= tol);
        }
    }
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("elementwise examples") {
    Tape tape;
    const auto zeros = tape.leaf(Tensor::vector({0.0, 0.0}));
    CHECK(tape.value(tape.exp(zeros)).values == std::vector<double>{1.0, 1.0});

    const auto a = tape.leaf(Tensor::vector({1.0, 2.0}));
    const auto b = tape.leaf(Tensor::vector({3.0, 4.0}));
    CHECK(tape.value(tape.add(a, b)).values == std::vector<double>{4.0, 6.0});

    Rng rng(41);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(1e-6, 5.0);
        Tape t2;
        const auto lx = t2.leaf(Tensor::scalar(x));
        const double roundtrip = t2.value(t2.log(t2.exp(lx))).values[0];
        CHECK(std::abs(roundtrip - x) <= 1e-12);
    }
}

TEST_CASE("elementwise scalar broadcast and errors") {
    Tape tape;
    const auto v = tape.leaf(Tensor::vector({1.0, 2.0, 3.0}));
    CHECK(tape.value(tape.mul(v, 2.0)).values == std::vector<double>{2.0, 4.0, 6.0});
    const auto s = tape.leaf(Tensor::scalar(10.0));
    CHECK(tape.value(tape.sub(v, s)).values == std::vector<double>{-9.0, -8.0, -7.0});

    const auto w = tape.leaf(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_WITH_AS(tape.add(v, w), doctest::Contains("[3]"), std::invalid_argument);
    CHECK_THROWS_AS(tape.log(tape.leaf(Tensor::vector({1.0, -1.0}))), std::domain_error);
    CHECK_THROWS_AS(tape.div(v, tape.leaf(Tensor::vector({1.0, 0.0, 2.0}))), std::domain_error);
}

TEST_CASE("matmul examples") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {3, 3});
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;

    Tape tape;
    const auto mx = tape.leaf(x);
    CHECK(tape.value(tape.matmul(tape.leaf(eye), mx)).values == x.values);

    const auto a = tape.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const auto ones = tape.leaf(Tensor::matrix(2, 1, {1, 1}));
    CHECK(tape.value(tape.matmul(a, ones)).values == std::vector<double>{3.0, 7.0});

    const auto z = tape.leaf(Tensor::zeros({2, 2}));
    const auto zx = tape.matmul(z, tape.leaf(Tensor::matrix(2, 2, {5, 6, 7, 8})));
    CHECK(tape.value(zx).values == std::vector<double>{0, 0, 0, 0});

    CHECK_THROWS_AS(tape.matmul(a, tape.leaf(Tensor::matrix(3, 1, {1, 1, 1}))), std::invalid_argument);
}

TEST_CASE("softmax examples and normalization property") {
    Tape tape;
    const auto even = tape.softmax(tape.leaf(Tensor::vector({0.0, 0.0})));
    CHECK(tape.value(even).values[0] == doctest::Approx(0.5).epsilon(1e-14));

    const auto skew = tape.softmax(tape.leaf(Tensor::vector({std::log(1.0), std::log(3.0)})));
    CHECK(std::abs(tape.value(skew).values[0] - 0.25) <= 1e-12);
    CHECK(std::abs(tape.value(skew).values[1] - 0.75) <= 1e-12);

    const auto large = tape.softmax(tape.leaf(Tensor::vector({1000.0, 0.0})));
    CHECK(tape.value(large).values[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(tape.value(large).values[1]));

    Rng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        Tape t2;
        const int n = 2 + rng.below(6);
        const auto y = t2.value(t2.softmax(t2.leaf(random_tensor(rng, {n}, -30.0, 30.0))));
        double sum = 0.0;
        for (double v : y.values) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }

    Tensor bad = Tensor::vector({1.0, std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(tape.softmax(tape.leaf(bad)), std::domain_error);
}

TEST_CASE("backward examples") {
    // d/dx (x*x) at 3 is 6
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::scalar(3.0), true);
        const auto y = tape.mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x).values[0] == doctest::Approx(6.0).epsilon(1e-14));
    }
    // constant leaf not reaching the root keeps a zero gradient
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::scalar(2.0), true);
        const auto unused = tape.leaf(Tensor::vector({1.0, 2.0}), true);
        const auto y = tape.mul(x, 5.0);
        tape.backward(y);
        CHECK(tape.grad(unused).values == std::vector<double>{0.0, 0.0});
    }
    // non-scalar root is rejected
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::vector({1.0, 2.0}), true);
        CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
    }
    // the tape closes after backward
    {
        Tape tape;
        const auto x = tape.leaf(Tensor::scalar(1.0), true);
        tape.backward(x);
        CHECK_THROWS_AS(tape.mul(x, 2.0), std::logic_error);
    }
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    Rng rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 3 + rng.below(4);
        const int target = rng.below(n);
        // -log softmax(x)[target], via both the fused and composed routes
        check_gradients({random_tensor(rng, {1, n}, -1.5, 1.5)}, [target](Tape& t, const auto& ids) {
            return t.neg(t.pick(t.log_softmax_rows(ids[0]), {{0, target}}));
        });
        check_gradients({random_tensor(rng, {1, n}, -1.5, 1.5)}, [target](Tape& t, const auto& ids) {
            return t.neg(t.pick(t.log(t.softmax(ids[0], 1)), {{0, target}}));
        });
    }
}

TEST_CASE("finite-difference gradients across every differentiable op") {
    Rng rng(99);
    int cases = 0;
    while (cases < 120) {
        const int m = 2 + rng.below(3), k = 2 + rng.below(3), n = 2 + rng.below(3);
        switch (cases % 8) {
            case 0:
                check_gradients({random_tensor(rng, {m, k}), random_tensor(rng, {m, k})},
                                [](Tape& t, const auto& ids) { return t.sum(t.mul(t.add(ids[0], ids[1]), t.sub(ids[0], ids[1]))); });
                break;
            case 1:
                check_gradients({random_tensor(rng, {m, k}), random_tensor(rng, {k, n})},
                                [](Tape& t, const auto& ids) { return t.sum(t.matmul(ids[0], ids[1])); });
                break;
            case 2:
                check_gradients({random_tensor(rng, {m, k}, 0.5, 3.0), random_tensor(rng, {m, k}, 0.5, 3.0)},
                                [](Tape& t, const auto& ids) { return t.mean(t.div(t.log(ids[0]), ids[1])); });
                break;
            case 3:
                check_gradients({random_tensor(rng, {m, n}, -1.0, 1.0)},
                                [](Tape& t, const auto& ids) { return t.sum(t.exp(t.neg(t.softmax(ids[0], 1)))); });
                break;
            case 4:
                check_gradients({random_tensor(rng, {m, n})},
                                [](Tape& t, const auto& ids) { return t.sum(t.log_softmax_rows(t.transpose(ids[0]))); });
                break;
            case 5: {
                // relu and clamp away from their kinks
                Tensor x = random_tensor(rng, {m, k});
                for (double& v : x.values) {
                    if (std::abs(v) < 0.1) v += 0.3;
                    if (std::abs(v - 1.5) < 0.1) v += 0.3;
                }
                check_gradients({x}, [](Tape& t, const auto& ids) {
                    return t.sum(t.add(t.relu(ids[0]), t.clamp(ids[0], -1.5, 1.5)));
                });
                break;
            }
            case 6: {
                // minimum with separated operands
                Tensor a = random_tensor(rng, {m, k});
                Tensor b = random_tensor(rng, {m, k});
                for (size_t i = 0; i < a.values.size(); ++i) {
                    if (std::abs(a.values[i] - b.values[i]) < 0.1) b.values[i] += 0.5;
                }
                check_gradients({a, b}, [](Tape& t, const auto& ids) { return t.sum(t.minimum(ids[0], ids[1])); });
                break;
            }
            case 7: {
                std::vector<int> idx;
                for (int i = 0; i < 3; ++i) idx.push_back(rng.below(m));
                check_gradients({random_tensor(rng, {m, k})}, [idx](Tape& t, const auto& ids) {
                    return t.mean(t.rows(ids[0], idx));
                });
                break;
            }
        }
        ++cases;
    }
    CHECK(cases >= 100);
}

TEST_CASE("determinism: identical inputs yield bit-identical outputs") {
    Rng rng(123);
    const Tensor a = random_tensor(rng, {4, 5});
    const Tensor b = random_tensor(rng, {5, 3});
    auto run = [&] {
        Tape tape;
        const auto r = tape.softmax(tape.matmul(tape.leaf(a), tape.leaf(b)), 1);
        return tape.value(r).values;
    };
    const auto first = run();
    for (int i = 0; i < 5; ++i) CHECK(run() == first);
}

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({0}), std::invalid_argument);
    const Tensor t = Tensor::matrix(2, 2, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.shape_str() == "[2x2]");
}
