#pragma once

// Shared helpers for the test suites: random tensor generation and a central
// finite-difference gradient checker. The checker is the independent oracle
// for every analytical gradient in the library; it must never call into the
// backward rules it verifies.

#include <cmath>
#include <functional>
#include <vector>

#include "atha/rng.hpp"
#include "atha/tensor.hpp"

namespace testsup {

inline atha::Tensor random_tensor(atha::Rng& rng, atha::Shape shape, double lo = -2.0,
                                  double hi = 2.0, bool requires_grad = true) {
    std::vector<double> data(static_cast<std::size_t>(atha::shape_numel(shape)));
    for (auto& v : data) v = rng.uniform(lo, hi);
    atha::Tensor t(std::move(shape), std::move(data));
    t.set_requires_grad(requires_grad);
    return t;
}

// relative error with a guard for near-zero gradients
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b));
}

// Checks d(f)/d(input[i]) against central differences for every element of
// every listed input. `f` must rebuild the graph from scratch on each call
// and return a scalar tensor. Returns the worst relative error seen.
inline double check_gradients(const std::vector<atha::Tensor>& inputs,
                              const std::function<atha::Tensor()>& f, double h = 1e-5) {
    for (const auto& in : inputs) const_cast<atha::Tensor&>(in).zero_grad();
    atha::Tensor loss = f();
    loss.backward();

    double worst = 0.0;
    for (const auto& in : inputs) {
        const std::vector<double> analytic = in.grad();
        auto& data = const_cast<atha::Tensor&>(in).data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = f().value();
            data[i] = keep - h;
            const double down = f().value();
            data[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, rel_err(analytic[i], fd));
        }
    }
    return worst;
}

// Sweeps every differentiable op with `instances` random cases each and
// returns the worst analytic-vs-finite-difference relative error. Shared by
// the unit tests and the acceptance suite.
inline double fd_sweep_all_ops(int instances, std::uint64_t seed = 7) {
    using namespace atha;
    Rng rng(seed);
    double worst = 0.0;

    // fixed random linear functional so the checked scalar is stable across
    // the repeated forward evaluations of the finite-difference probe
    auto functional = [&rng](const Shape& shape) {
        std::vector<double> r(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& v : r) v = rng.uniform(-1.0, 1.0);
        return Tensor(shape, std::move(r));
    };
    auto lin = [](const Tensor& out, const Tensor& r) { return reduce_sum(mul(out, r)); };

    for (int inst = 0; inst < instances; ++inst) {
        const int m = 1 + static_cast<int>(rng.uniform_int(3));
        const int k = 1 + static_cast<int>(rng.uniform_int(3));
        const int n = 1 + static_cast<int>(rng.uniform_int(3));

        {
            auto a = random_tensor(rng, {m, k});
            auto b = random_tensor(rng, {k, n});
            auto r = functional({m, n});
            worst = std::max(worst,
                             check_gradients({a, b}, [&] { return lin(matmul(a, b), r); }));
        }
        {
            auto a = random_tensor(rng, {m, n});
            auto b = random_tensor(rng, {m, n});
            auto r = functional({m, n});
            worst = std::max(worst, check_gradients({a, b}, [&] { return lin(add(a, b), r); }));
            worst = std::max(worst, check_gradients({a, b}, [&] { return lin(sub(a, b), r); }));
            worst = std::max(worst, check_gradients({a, b}, [&] { return lin(mul(a, b), r); }));
            worst = std::max(worst, check_gradients({a}, [&] { return lin(scale(a, 1.7), r); }));
            auto s = random_tensor(rng, {1});
            worst = std::max(worst,
                             check_gradients({a, s}, [&] { return lin(scale_by(a, s), r); }));
            auto row = random_tensor(rng, {n});
            worst = std::max(worst,
                             check_gradients({a, row}, [&] { return lin(add_rowwise(a, row), r); }));
            auto rt = functional({n, m});
            worst = std::max(worst, check_gradients({a}, [&] { return lin(transpose(a), rt); }));
            worst = std::max(worst,
                             check_gradients({a}, [&] { return lin(reshape(a, {n, m}), rt); }));
            worst = std::max(worst, check_gradients({a}, [&] { return lin(gelu(a), r); }));
            worst = std::max(worst, check_gradients({a}, [&] { return lin(softmax(a), r); }));
            worst = std::max(worst, check_gradients({a}, [&] { return scale_by(reduce_sum(a), s); }));
            worst = std::max(worst, check_gradients({a}, [&] { return scale_by(reduce_mean(a), s); }));
        }
        {
            auto x = random_tensor(rng, {m + 1, n});
            std::vector<int> idx;
            for (int i = 0; i < m + 2; ++i)
                idx.push_back(static_cast<int>(rng.uniform_int(m + 1)));  // repeats exercise scatter-add
            auto rg = functional({m + 2, n});
            worst = std::max(worst,
                             check_gradients({x}, [&] { return lin(gather_rows(x, idx), rg); }));
            auto rs = functional({m + 1, n});
            worst = std::max(worst,
                             check_gradients({x}, [&] { return lin(slice_cols(x, 0, n), rs); }));
            auto x2 = random_tensor(rng, {2, n});
            auto rc = functional({m + 3, n});
            worst = std::max(worst, check_gradients({x, x2}, [&] {
                                 return lin(concat_rows({x, x2}), rc);
                             }));
            auto x3 = random_tensor(rng, {m + 1, 2});
            auto rcc = functional({m + 1, n + 2});
            worst = std::max(worst, check_gradients({x, x3}, [&] {
                                 return lin(concat_cols({x, x3}), rcc);
                             }));
        }
        {
            auto x = random_tensor(rng, {m, 3 + n});
            auto g = random_tensor(rng, {3 + n}, 0.5, 1.5);
            auto b = random_tensor(rng, {3 + n});
            auto r = functional({m, 3 + n});
            worst = std::max(worst, check_gradients({x, g, b}, [&] {
                                 return lin(layer_norm(x, g, b, 1e-5), r);
                             }));
            worst = std::max(worst,
                             check_gradients({x}, [&] { return lin(normalize_rows(x), r); }));
        }
        {
            const int d = 2 + static_cast<int>(rng.uniform_int(4));
            auto u = random_tensor(rng, {d}, 0.2, 2.0);
            auto v = random_tensor(rng, {d}, 0.2, 2.0);
            worst = std::max(worst,
                             check_gradients({u, v}, [&] { return cosine_similarity(u, v); }));
        }
        {
            auto v = random_tensor(rng, {m, 4});
            auto t = random_tensor(rng, {n, 4}, 2.5, 4.0);  // keep rows apart from v's
            auto r = functional({m, n});
            worst = std::max(worst, check_gradients({v, t}, [&] {
                                 return lin(pairwise_neg_euclidean(v, t), r);
                             }));
        }
        {
            const int c = 2 + static_cast<int>(rng.uniform_int(5));
            auto sims = random_tensor(rng, {c}, -1.0, 1.0);
            const int label = static_cast<int>(rng.uniform_int(c));
            worst = std::max(worst, check_gradients({sims}, [&] {
                                 return cross_entropy_from_similarities(sims, label, 0.5);
                             }));
        }
    }
    return worst;
}

}  // namespace testsup
