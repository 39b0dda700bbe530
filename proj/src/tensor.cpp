#include "equiplan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace equiplan {

Tensor::Tensor(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != r * c) {
        throw contract_error("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
    }
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::column(std::initializer_list<double> values) {
    Tensor t(values.size(), 1);
    std::copy(values.begin(), values.end(), t.data.begin());
    return t;
}

Tensor Tensor::column(const std::vector<double>& values) {
    Tensor t(values.size(), 1);
    std::copy(values.begin(), values.end(), t.data.begin());
    return t;
}

Tensor Tensor::row2(double x, double y) {
    Tensor t(1, 2);
    t.data = {x, y};
    return t;
}

Tensor Tensor::init_uniform(std::size_t r, std::size_t c, std::size_t fan_in, Rng& rng) {
    Tensor t(r, c);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : t.data) x = rng.uniform(-bound, bound);
    return t;
}

double Tensor::scalar() const {
    if (!is_scalar()) {
        throw contract_error("scalar() on tensor of shape " + shape_str());
    }
    return data[0];
}

std::string Tensor::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

std::size_t argmax(const std::vector<double>& v) {
    if (v.empty()) throw contract_error("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

std::size_t argmin(const std::vector<double>& v) {
    if (v.empty()) throw contract_error("argmin of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[best]) best = i;
    }
    return best;
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
    Tensor out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

namespace {

// da += g * b^T, with g (m x n), b (k x n), da (m x k)
void accum_matmul_nt(Tensor& da, const Tensor& g, const Tensor& b) {
    for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t k = 0; k < b.rows; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < g.cols; ++j) acc += g.at(i, j) * b.at(k, j);
            da.at(i, k) += acc;
        }
    }
}

// db += a^T * g, with a (m x k), g (m x n), db (k x n)
void accum_matmul_tn(Tensor& db, const Tensor& a, const Tensor& g) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < g.cols; ++j) {
                db.at(k, j) += aik * g.at(i, j);
            }
        }
    }
}

}  // namespace

std::int32_t Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size()) {
        throw contract_error("Var does not belong to this tape");
    }
    return v.idx;
}

Var Tape::push(Tensor value, const char* op, bool requires_grad,
               std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), "leaf", true, nullptr); }

Var Tape::constant(Tensor value) { return push(std::move(value), "constant", false, nullptr); }

void Tape::backward(Var loss) {
    const std::int32_t root = check(loss);
    if (!nodes_[root].value.is_scalar()) {
        throw contract_error("backward() requires a scalar loss, got shape " +
                             nodes_[root].value.shape_str());
    }
    for (auto& n : nodes_) {
        n.grad = Tensor(n.value.rows, n.value.cols);
    }
    nodes_[root].grad.data[0] = 1.0;
    for (std::int32_t i = root; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backprop) n.backprop(*this);
    }
}

std::string Tape::first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].value.all_finite()) {
            return std::string(nodes_[i].op) + "#" + std::to_string(i);
        }
    }
    return {};
}

Var Tape::matmul(Var a, Var b) {
    const std::int32_t ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.cols != vb.rows) {
        throw contract_error("matmul dimension mismatch: " + va.shape_str() + " * " +
                             vb.shape_str());
    }
    const bool req = needs(a) || needs(b);
    Var out{static_cast<std::int32_t>(nodes_.size())};
    const std::int32_t io = out.idx;
    return push(matmul_values(va, vb), "matmul", req, [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ia].requires_grad) accum_matmul_nt(t.grad_mut(ia), g, t.nodes_[ib].value);
        if (t.nodes_[ib].requires_grad) accum_matmul_tn(t.grad_mut(ib), t.nodes_[ia].value, g);
    });
}

Var Tape::add(Var a, Var b) {
    const std::int32_t ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (!va.same_shape(vb)) {
        throw contract_error("add shape mismatch: " + va.shape_str() + " vs " + vb.shape_str());
    }
    Tensor v = va;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] += vb.data[i];
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "add", needs(a) || needs(b), [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_mut(ib);
            for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const std::int32_t ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (!va.same_shape(vb)) {
        throw contract_error("sub shape mismatch: " + va.shape_str() + " vs " + vb.shape_str());
    }
    Tensor v = va;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] -= vb.data[i];
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "sub", needs(a) || needs(b), [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_mut(ib);
            for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] -= g.data[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const std::int32_t ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (!va.same_shape(vb)) {
        throw contract_error("mul shape mismatch: " + va.shape_str() + " vs " + vb.shape_str());
    }
    Tensor v = va;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] *= vb.data[i];
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "mul", needs(a) || needs(b), [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const Tensor& vb2 = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * vb2.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_mut(ib);
            for (std::size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i] * va2.data[i];
        }
    });
}

Var Tape::div(Var a, Var b) {
    const std::int32_t ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (!va.same_shape(vb)) {
        throw contract_error("div shape mismatch: " + va.shape_str() + " vs " + vb.shape_str());
    }
    Tensor v = va;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] /= vb.data[i];
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "div", needs(a) || needs(b), [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const Tensor& vb2 = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] / vb2.data[i];
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_mut(ib);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                db.data[i] -= g.data[i] * va2.data[i] / (vb2.data[i] * vb2.data[i]);
            }
        }
    });
}

Var Tape::scale(Var a, double s) {
    const std::int32_t ia = check(a);
    Tensor v = nodes_[ia].value;
    for (auto& x : v.data) x *= s;
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "scale", needs(a), [ia, io, s](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        Tensor& da = t.grad_mut(ia);
        for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += s * g.data[i];
    });
}

Var Tape::scale_by(Var a, Var s) {
    const std::int32_t ia = check(a), is = check(s);
    const Tensor& vs = nodes_[is].value;
    if (!vs.is_scalar()) {
        throw contract_error("scale_by expects a 1x1 scalar, got " + vs.shape_str());
    }
    Tensor v = nodes_[ia].value;
    const double sv = vs.data[0];
    for (auto& x : v.data) x *= sv;
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "scale_by", needs(a) || needs(s), [ia, is, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const double sv2 = t.nodes_[is].value.data[0];
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * sv2;
        }
        if (t.nodes_[is].requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * va2.data[i];
            t.grad_mut(is).data[0] += acc;
        }
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    const std::int32_t ia = check(a), iv = check(v);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vv = nodes_[iv].value;
    if (vv.rows != 1 || vv.cols != va.cols) {
        throw contract_error("add_rowvec shape mismatch: " + va.shape_str() + " + " +
                             vv.shape_str());
    }
    Tensor out = va;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out.at(r, c) += vv.at(0, c);
    }
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "add_rowvec", needs(a) || needs(v), [ia, iv, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (t.nodes_[iv].requires_grad) {
            Tensor& dv = t.grad_mut(iv);
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < g.cols; ++c) dv.at(0, c) += g.at(r, c);
            }
        }
    });
}

Var Tape::scale_rows(Var a, Var s) {
    const std::int32_t ia = check(a), is = check(s);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vs = nodes_[is].value;
    if (vs.cols != 1 || vs.rows != va.rows) {
        throw contract_error("scale_rows shape mismatch: " + va.shape_str() + " rows by " +
                             vs.shape_str());
    }
    Tensor out = va;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out.at(r, c) *= vs.at(r, 0);
    }
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "scale_rows", needs(a) || needs(s), [ia, is, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const Tensor& vs2 = t.nodes_[is].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < g.cols; ++c) da.at(r, c) += g.at(r, c) * vs2.at(r, 0);
            }
        }
        if (t.nodes_[is].requires_grad) {
            Tensor& ds = t.grad_mut(is);
            for (std::size_t r = 0; r < g.rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < g.cols; ++c) acc += g.at(r, c) * va2.at(r, c);
                ds.at(r, 0) += acc;
            }
        }
    });
}

Var Tape::rowwise_l2norm(Var a) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.cols != 2) {
        throw contract_error("rowwise_l2norm expects m x 2, got " + va.shape_str());
    }
    Tensor out(va.rows, 1);
    for (std::size_t r = 0; r < va.rows; ++r) {
        out.at(r, 0) = std::sqrt(va.at(r, 0) * va.at(r, 0) + va.at(r, 1) * va.at(r, 1));
    }
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "rowwise_l2norm", needs(a), [ia, io](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& y = t.nodes_[io].value;
        const Tensor& va2 = t.nodes_[ia].value;
        Tensor& da = t.grad_mut(ia);
        for (std::size_t r = 0; r < y.rows; ++r) {
            const double n = y.at(r, 0);
            if (n == 0.0) continue;  // subgradient 0 at the zero row
            da.at(r, 0) += g.at(r, 0) * va2.at(r, 0) / n;
            da.at(r, 1) += g.at(r, 0) * va2.at(r, 1) / n;
        }
    });
}

Var Tape::rowwise_dot(Var a, Var b) {
    const std::int32_t ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.cols != 2 || !va.same_shape(vb)) {
        throw contract_error("rowwise_dot shape mismatch: " + va.shape_str() + " vs " +
                             vb.shape_str());
    }
    Tensor out(va.rows, 1);
    for (std::size_t r = 0; r < va.rows; ++r) {
        out.at(r, 0) = va.at(r, 0) * vb.at(r, 0) + va.at(r, 1) * vb.at(r, 1);
    }
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "rowwise_dot", needs(a) || needs(b), [ia, ib, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& va2 = t.nodes_[ia].value;
        const Tensor& vb2 = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            Tensor& da = t.grad_mut(ia);
            for (std::size_t r = 0; r < g.rows; ++r) {
                da.at(r, 0) += g.at(r, 0) * vb2.at(r, 0);
                da.at(r, 1) += g.at(r, 0) * vb2.at(r, 1);
            }
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor& db = t.grad_mut(ib);
            for (std::size_t r = 0; r < g.rows; ++r) {
                db.at(r, 0) += g.at(r, 0) * va2.at(r, 0);
                db.at(r, 1) += g.at(r, 0) * va2.at(r, 1);
            }
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw contract_error("concat_rows of zero parts");
    std::vector<std::int32_t> idx;
    idx.reserve(parts.size());
    std::size_t rows = 0;
    const std::size_t cols = nodes_[check(parts[0])].value.cols;
    bool req = false;
    for (Var p : parts) {
        const std::int32_t ip = check(p);
        if (nodes_[ip].value.cols != cols) {
            throw contract_error("concat_rows column mismatch: " +
                                 nodes_[ip].value.shape_str() + " vs cols=" +
                                 std::to_string(cols));
        }
        rows += nodes_[ip].value.rows;
        req = req || nodes_[ip].requires_grad;
        idx.push_back(ip);
    }
    Tensor out(rows, cols);
    std::size_t r0 = 0;
    for (std::int32_t ip : idx) {
        const Tensor& v = nodes_[ip].value;
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + r0 * cols);
        r0 += v.rows;
    }
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "concat_rows", req, [idx, io](Tape& t) {
        const Tensor& g = t.nodes_[io].grad;
        std::size_t r0 = 0;
        for (std::int32_t ip : idx) {
            const std::size_t n = t.nodes_[ip].value.data.size();
            if (t.nodes_[ip].requires_grad) {
                Tensor& dp = t.grad_mut(ip);
                const double* src = g.data.data() + r0;
                for (std::size_t i = 0; i < n; ++i) dp.data[i] += src[i];
            }
            r0 += n;
        }
    });
}

Var Tape::slice_rows(Var a, std::size_t row0, std::size_t nrows) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (row0 + nrows > va.rows) {
        throw contract_error("slice_rows [" + std::to_string(row0) + ", " +
                             std::to_string(row0 + nrows) + ") out of range for " +
                             va.shape_str());
    }
    Tensor out(nrows, va.cols);
    std::copy(va.data.begin() + row0 * va.cols, va.data.begin() + (row0 + nrows) * va.cols,
              out.data.begin());
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "slice_rows", needs(a), [ia, io, row0](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        Tensor& da = t.grad_mut(ia);
        double* dst = da.data.data() + row0 * da.cols;
        for (std::size_t i = 0; i < g.data.size(); ++i) dst[i] += g.data[i];
    });
}

Var Tape::mean_rows(Var a) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.rows == 0) throw contract_error("mean_rows of empty tensor");
    Tensor out(1, va.cols);
    for (std::size_t r = 0; r < va.rows; ++r) {
        for (std::size_t c = 0; c < va.cols; ++c) out.at(0, c) += va.at(r, c);
    }
    const double inv = 1.0 / static_cast<double>(va.rows);
    for (auto& x : out.data) x *= inv;
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "mean_rows", needs(a), [ia, io, inv](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        Tensor& da = t.grad_mut(ia);
        for (std::size_t r = 0; r < da.rows; ++r) {
            for (std::size_t c = 0; c < da.cols; ++c) da.at(r, c) += g.at(0, c) * inv;
        }
    });
}

Var Tape::mean_all(Var a) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.numel() == 0) throw contract_error("mean_all of empty tensor");
    const double inv = 1.0 / static_cast<double>(va.numel());
    Tensor out(1, 1);
    out.data[0] = std::accumulate(va.data.begin(), va.data.end(), 0.0) * inv;
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "mean_all", needs(a), [ia, io, inv](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const double g = t.nodes_[io].grad.data[0] * inv;
        for (auto& x : t.grad_mut(ia).data) x += g;
    });
}

Var Tape::sum_all(Var a) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    Tensor out(1, 1);
    out.data[0] = std::accumulate(va.data.begin(), va.data.end(), 0.0);
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "sum_all", needs(a), [ia, io](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const double g = t.nodes_[io].grad.data[0];
        for (auto& x : t.grad_mut(ia).data) x += g;
    });
}

Var Tape::sigmoid(Var a) {
    const std::int32_t ia = check(a);
    Tensor v = nodes_[ia].value;
    for (auto& x : v.data) x = 1.0 / (1.0 + std::exp(-x));
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "sigmoid", needs(a), [ia, io](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& y = t.nodes_[io].value;
        Tensor& da = t.grad_mut(ia);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        }
    });
}

Var Tape::tanh(Var a) {
    const std::int32_t ia = check(a);
    Tensor v = nodes_[ia].value;
    for (auto& x : v.data) x = std::tanh(x);
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "tanh", needs(a), [ia, io](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& y = t.nodes_[io].value;
        Tensor& da = t.grad_mut(ia);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        }
    });
}

Var Tape::softmax(Var a) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.cols != 1 || va.rows == 0) {
        throw contract_error("softmax expects a non-empty column vector, got " + va.shape_str());
    }
    Tensor v = va;
    const double m = *std::max_element(v.data.begin(), v.data.end());
    double sum = 0.0;
    for (auto& x : v.data) {
        x = std::exp(x - m);
        sum += x;
    }
    for (auto& x : v.data) x /= sum;
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "softmax", needs(a), [ia, io](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& y = t.nodes_[io].value;
        double dot = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) dot += g.data[i] * y.data[i];
        Tensor& da = t.grad_mut(ia);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += y.data[i] * (g.data[i] - dot);
        }
    });
}

Var Tape::log_softmax(Var a) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (va.cols != 1 || va.rows == 0) {
        throw contract_error("log_softmax expects a non-empty column vector, got " +
                             va.shape_str());
    }
    Tensor v = va;
    const double m = *std::max_element(v.data.begin(), v.data.end());
    double sum = 0.0;
    for (const auto& x : v.data) sum += std::exp(x - m);
    const double lse = m + std::log(sum);
    for (auto& x : v.data) x -= lse;
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(v), "log_softmax", needs(a), [ia, io](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        const Tensor& g = t.nodes_[io].grad;
        const Tensor& y = t.nodes_[io].value;
        double gsum = 0.0;
        for (const auto& x : g.data) gsum += x;
        Tensor& da = t.grad_mut(ia);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += g.data[i] - std::exp(y.data[i]) * gsum;
        }
    });
}

Var Tape::pick(Var a, std::size_t index) {
    const std::int32_t ia = check(a);
    const Tensor& va = nodes_[ia].value;
    if (index >= va.numel()) {
        throw contract_error("pick index " + std::to_string(index) + " out of range for " +
                             va.shape_str());
    }
    Tensor out(1, 1);
    out.data[0] = va.data[index];
    const std::int32_t io = static_cast<std::int32_t>(nodes_.size());
    return push(std::move(out), "pick", needs(a), [ia, io, index](Tape& t) {
        if (!t.nodes_[ia].requires_grad) return;
        t.grad_mut(ia).data[index] += t.nodes_[io].grad.data[0];
    });
}

}  // namespace equiplan
