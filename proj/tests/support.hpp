#pragma once

// Shared test utilities: finite-difference gradient oracle, tolerant
// comparisons, random tensors and rigid transforms. Everything here is
// forward-evaluation only and independent of the reverse-mode path it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "equiplan/rng.hpp"
#include "equiplan/scene.hpp"
#include "equiplan/tensor.hpp"

namespace testsupport {

inline equiplan::Se2 random_se2(equiplan::Rng& rng, double t_max = 100.0) {
    return {rng.uniform(0.0, 2.0 * M_PI),
            {rng.uniform(-t_max, t_max), rng.uniform(-t_max, t_max)}};
}

// Right group action on the rows of an n x 2 matrix: p -> p R + t.
inline equiplan::Tensor se2_rows(const equiplan::Tensor& m, const equiplan::Se2& g) {
    equiplan::Tensor out = m;
    for (std::size_t r = 0; r < m.rows; ++r) {
        const equiplan::Vec2 p = g.apply({m.at(r, 0), m.at(r, 1)});
        out.at(r, 0) = p.x;
        out.at(r, 1) = p.y;
    }
    return out;
}

inline equiplan::Tensor random_tensor(std::size_t r, std::size_t c, equiplan::Rng& rng,
                                      double lo = -1.0, double hi = 1.0) {
    equiplan::Tensor t(r, c);
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of a scalar functional with respect to p.
// `eval` must re-run the full forward pass reading the current contents of p.
inline equiplan::Tensor fd_gradient(const std::function<double()>& eval, equiplan::Tensor& p,
                                    double step = 1e-6) {
    equiplan::Tensor g(p.rows, p.cols);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double saved = p.data[i];
        p.data[i] = saved + step;
        const double fp = eval();
        p.data[i] = saved - step;
        const double fm = eval();
        p.data[i] = saved;
        g.data[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// Relative error with the magnitude floored at 1, so exact-zero gradients
// compare in absolute terms.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

inline double max_rel_err(const equiplan::Tensor& a, const equiplan::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, rel_err(a.data[i], b.data[i]));
    }
    return worst;
}

inline double max_abs_diff(const equiplan::Tensor& a, const equiplan::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

}  // namespace testsupport
