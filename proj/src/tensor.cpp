#include "atha/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_set>

namespace atha {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->data.assign(static_cast<std::size_t>(shape_numel(node_->shape)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<Node>()) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw shape_error("tensor: data size " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
}

double Tensor::value() const {
    if (numel() != 1)
        throw shape_error("value(): tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
}

double Tensor::operator()(int i, int j) const {
    return node_->data[static_cast<std::size_t>(i) * dim(rank() - 1) + j];
}

double& Tensor::operator()(int i, int j) {
    return node_->data[static_cast<std::size_t>(i) * dim(rank() - 1) + j];
}

Tensor& Tensor::set_requires_grad(bool v) {
    node_->requires_grad = v;
    if (!v) node_->grad.clear();
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw std::runtime_error("grad(): no gradient present (did you call backward()?)");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor out(node_->shape, node_->data);
    out.node_->requires_grad = node_->requires_grad;
    return out;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data));
    bool needs = false;
    for (const auto& p : parents) needs |= p.requires_grad();
    if (needs) {
        out.node_->requires_grad = true;
        for (const auto& p : parents)
            if (p.requires_grad()) out.node_->parents.push_back(p.node());
        out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
}

void Tensor::backward() const {
    if (numel() != 1)
        throw shape_error("backward(): loss must be scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;  // nothing trainable reachable

    // Post-order DFS: every node appears after all of its parents, so the
    // reversed list processes each node once, consumers first.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    // Interior nodes carry per-sweep gradients; only leaves accumulate
    // across repeated backward() calls.
    for (Node* n : order)
        if (n->backward_fn) {
            n->ensure_grad();
            std::fill(n->grad.begin(), n->grad.end(), 0.0);
        }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

namespace {

void accumulate(const Tensor& t, const std::vector<double>& delta) {
    if (!t.requires_grad()) return;
    Node& n = *t.node();
    n.ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) n.grad[i] += delta[i];
}

void check_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw shape_error(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

// rows x cols view of the last axis
std::pair<std::int64_t, int> rows_cols(const Tensor& t) {
    if (t.rank() == 0 || t.numel() == 0)
        throw shape_error("empty tensor");
    int cols = t.dim(t.rank() - 1);
    return {t.numel() / cols, cols};
}

}  // namespace

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw shape_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                          " x " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (int i = 0; i < m; ++i) {
        double* C = out.data() + static_cast<std::size_t>(i) * n;
        const double* Ai = A + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aip = Ai[p];
            const double* Bp = B + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) C[j] += aip * Bp[j];
        }
    }
    return make_op({m, n}, std::move(out), {a, b}, [a, b, m, k, n](Node& o) {
        const double* G = o.grad.data();
        if (a.requires_grad()) {
            Node& na = *a.node();
            na.ensure_grad();
            const double* B = b.data().data();
            for (int i = 0; i < m; ++i) {
                double* dAi = na.grad.data() + static_cast<std::size_t>(i) * k;
                const double* Gi = G + static_cast<std::size_t>(i) * n;
                for (int p = 0; p < k; ++p) {
                    const double* Bp = B + static_cast<std::size_t>(p) * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
                    dAi[p] += acc;
                }
            }
        }
        if (b.requires_grad()) {
            Node& nb = *b.node();
            nb.ensure_grad();
            const double* A = a.data().data();
            for (int i = 0; i < m; ++i) {
                const double* Ai = A + static_cast<std::size_t>(i) * k;
                const double* Gi = G + static_cast<std::size_t>(i) * n;
                for (int p = 0; p < k; ++p) {
                    double* dBp = nb.grad.data() + static_cast<std::size_t>(p) * n;
                    const double aip = Ai[p];
                    for (int j = 0; j < n; ++j) dBp[j] += aip * Gi[j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw shape_error("add: shapes differ, " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](Node& o) {
        accumulate(a, o.grad);
        accumulate(b, o.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw shape_error("sub: shapes differ, " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](Node& o) {
        accumulate(a, o.grad);
        if (b.requires_grad()) {
            Node& nb = *b.node();
            nb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) nb.grad[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw shape_error("mul: shapes differ, " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [a, b](Node& o) {
        if (a.requires_grad()) {
            Node& na = *a.node();
            na.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                na.grad[i] += o.grad[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            Node& nb = *b.node();
            nb.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                nb.grad[i] += o.grad[i] * a.data()[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (auto& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a}, [a, c](Node& o) {
        if (!a.requires_grad()) return;
        Node& na = *a.node();
        na.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += c * o.grad[i];
    });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1)
        throw shape_error("scale_by: scale must be a 1-element tensor, got " +
                          shape_str(s.shape()));
    const double c = s.data()[0];
    std::vector<double> out(a.data());
    for (auto& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a, s}, [a, s, c](Node& o) {
        if (a.requires_grad()) {
            Node& na = *a.node();
            na.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += c * o.grad[i];
        }
        if (s.requires_grad()) {
            Node& ns = *s.node();
            ns.ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * a.data()[i];
            ns.grad[0] += acc;
        }
    });
}

Tensor add_rowwise(const Tensor& x, const Tensor& row) {
    check_2d(x, "add_rowwise");
    if (row.rank() != 1 || row.dim(0) != x.dim(1))
        throw shape_error("add_rowwise: row shape " + shape_str(row.shape()) +
                          " does not match " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.data());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += row(j);
    return make_op(x.shape(), std::move(out), {x, row}, [x, row, m, n](Node& o) {
        accumulate(x, o.grad);
        if (row.requires_grad()) {
            Node& nr = *row.node();
            nr.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    nr.grad[j] += o.grad[static_cast<std::size_t>(i) * n + j];
        }
    });
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

Tensor transpose(const Tensor& x) {
    check_2d(x, "transpose");
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = x.data()[static_cast<std::size_t>(i) * n + j];
    return make_op({n, m}, std::move(out), {x}, [x, m, n](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                nx.grad[static_cast<std::size_t>(i) * n + j] +=
                    o.grad[static_cast<std::size_t>(j) * m + i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw shape_error("reshape: cannot view " + shape_str(x.shape()) + " as " +
                          shape_str(shape));
    return make_op(std::move(shape), x.data(), {x}, [x](Node& o) { accumulate(x, o.grad); });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
    check_2d(x, "gather_rows");
    const int m = x.dim(0), n = x.dim(1);
    for (int idx : indices)
        if (idx < 0 || idx >= m)
            throw index_error("gather_rows: row " + std::to_string(idx) + " out of range [0," +
                              std::to_string(m) + ")");
    std::vector<double> out(indices.size() * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy_n(x.data().begin() + static_cast<std::size_t>(indices[i]) * n, n,
                    out.begin() + i * n);
    return make_op({static_cast<int>(indices.size()), n}, std::move(out), {x},
                   [x, indices, n](Node& o) {
                       if (!x.requires_grad()) return;
                       Node& nx = *x.node();
                       nx.ensure_grad();
                       // scatter-add: duplicate indices accumulate
                       for (std::size_t i = 0; i < indices.size(); ++i)
                           for (int j = 0; j < n; ++j)
                               nx.grad[static_cast<std::size_t>(indices[i]) * n + j] +=
                                   o.grad[i * static_cast<std::size_t>(n) + j];
                   });
}

Tensor slice_cols(const Tensor& x, int start, int count) {
    check_2d(x, "slice_cols");
    const int m = x.dim(0), n = x.dim(1);
    if (start < 0 || count < 0 || start + count > n)
        throw index_error("slice_cols: [" + std::to_string(start) + "," +
                          std::to_string(start + count) + ") out of range for " +
                          shape_str(x.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * count);
    for (int i = 0; i < m; ++i)
        std::copy_n(x.data().begin() + static_cast<std::size_t>(i) * n + start, count,
                    out.begin() + static_cast<std::size_t>(i) * count);
    return make_op({m, count}, std::move(out), {x}, [x, start, count, m, n](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < count; ++j)
                nx.grad[static_cast<std::size_t>(i) * n + start + j] +=
                    o.grad[static_cast<std::size_t>(i) * count + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_rows: no parts");
    const int n = parts[0].dim(1);
    int m = 0;
    for (const auto& p : parts) {
        check_2d(p, "concat_rows");
        if (p.dim(1) != n)
            throw shape_error("concat_rows: column counts differ, " + shape_str(p.shape()));
        m += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m) * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_op({m, n}, std::move(out), parts, [parts, n](Node& o) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t len = static_cast<std::size_t>(p.numel());
            if (p.requires_grad()) {
                Node& np = *p.node();
                np.ensure_grad();
                for (std::size_t i = 0; i < len; ++i) np.grad[i] += o.grad[off + i];
            }
            off += len;
        }
        (void)n;
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: no parts");
    const int m = parts[0].dim(0);
    int n = 0;
    for (const auto& p : parts) {
        check_2d(p, "concat_cols");
        if (p.dim(0) != m)
            throw shape_error("concat_cols: row counts differ, " + shape_str(p.shape()));
        n += p.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    int col = 0;
    for (const auto& p : parts) {
        const int pn = p.dim(1);
        for (int i = 0; i < m; ++i)
            std::copy_n(p.data().begin() + static_cast<std::size_t>(i) * pn, pn,
                        out.begin() + static_cast<std::size_t>(i) * n + col);
        col += pn;
    }
    return make_op({m, n}, std::move(out), parts, [parts, m, n](Node& o) {
        int col = 0;
        for (const auto& p : parts) {
            const int pn = p.dim(1);
            if (p.requires_grad()) {
                Node& np = *p.node();
                np.ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < pn; ++j)
                        np.grad[static_cast<std::size_t>(i) * pn + j] +=
                            o.grad[static_cast<std::size_t>(i) * n + col + j];
            }
            col += pn;
        }
    });
}

// ---------------------------------------------------------------------------
// nonlinearities / normalization
// ---------------------------------------------------------------------------

Tensor gelu(const Tensor& x) {
    // exact form, 0.5 x (1 + erf(x / sqrt(2)))
    std::vector<double> out(x.data());
    for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    return make_op(x.shape(), std::move(out), {x}, [x](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double v = x.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            nx.grad[i] += o.grad[i] * (cdf + v * pdf);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    auto [rows, d] = rows_cols(x);
    if (d == 0) throw shape_error("layer_norm: empty last axis");
    if (eps <= 0) throw config_error("layer_norm: eps must be positive");
    if (gain.numel() != d || bias.numel() != d)
        throw shape_error("layer_norm: gain/bias must have " + std::to_string(d) + " elements");

    std::vector<double> out(x.data().size());
    auto xhat = std::make_shared<std::vector<double>>(x.data().size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = is;
        for (int j = 0; j < d; ++j) {
            const double xh = (xr[j] - mean) * is;
            (*xhat)[static_cast<std::size_t>(r * d + j)] = xh;
            out[static_cast<std::size_t>(r * d + j)] = xh * gain(j) + bias(j);
        }
    }
    return make_op(x.shape(), std::move(out), {x, gain, bias},
                   [x, gain, bias, xhat, inv_std, rows, d](Node& o) {
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* g = o.grad.data() + r * d;
            const double* xh = xhat->data() + r * d;
            if (x.requires_grad()) {
                Node& nx = *x.node();
                nx.ensure_grad();
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dxh = g[j] * gain(j);
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[j];
                }
                const double is = (*inv_std)[static_cast<std::size_t>(r)];
                for (int j = 0; j < d; ++j) {
                    const double dxh = g[j] * gain(j);
                    nx.grad[static_cast<std::size_t>(r * d + j)] +=
                        is * (dxh - sum_dxh / d - xh[j] * sum_dxh_xh / d);
                }
            }
            if (gain.requires_grad()) {
                Node& ng = *gain.node();
                ng.ensure_grad();
                for (int j = 0; j < d; ++j) ng.grad[j] += g[j] * xh[j];
            }
            if (bias.requires_grad()) {
                Node& nb = *bias.node();
                nb.ensure_grad();
                for (int j = 0; j < d; ++j) nb.grad[j] += g[j];
            }
        }
    });
}

Tensor softmax(const Tensor& x) {
    auto [rows, c] = rows_cols(x);
    if (c < 1) throw shape_error("softmax: empty last axis");
    std::vector<double> out(x.data().size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * c;
        double mx = xr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(xr[j] - mx);
            out[static_cast<std::size_t>(r * c + j)] = e;
            denom += e;
        }
        for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(r * c + j)] /= denom;
    }
    Shape shp = x.shape();
    auto y = std::make_shared<std::vector<double>>(out);
    return make_op(std::move(shp), std::move(out), {x}, [x, y, rows, c](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* g = o.grad.data() + r * c;
            const double* yr = y->data() + r * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g[j] * yr[j];
            for (int j = 0; j < c; ++j)
                nx.grad[static_cast<std::size_t>(r * c + j)] += yr[j] * (g[j] - dot);
        }
    });
}

Tensor normalize_rows(const Tensor& x) {
    check_2d(x, "normalize_rows");
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.data().size());
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double* xr = x.data().data() + static_cast<std::size_t>(i) * n;
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += xr[j] * xr[j];
        const double norm = std::sqrt(s);
        if (norm == 0.0)
            throw numeric_error("normalize_rows: degenerate zero-norm row " + std::to_string(i));
        (*norms)[static_cast<std::size_t>(i)] = norm;
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = xr[j] / norm;
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_op(x.shape(), std::move(out), {x}, [x, y, norms, m, n](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const double* g = o.grad.data() + static_cast<std::size_t>(i) * n;
            const double* yr = y->data() + static_cast<std::size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g[j] * yr[j];
            const double inv = 1.0 / (*norms)[static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j)
                nx.grad[static_cast<std::size_t>(i) * n + j] += inv * (g[j] - dot * yr[j]);
        }
    });
}

// ---------------------------------------------------------------------------
// similarity / loss
// ---------------------------------------------------------------------------

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    if (u.shape() != v.shape() || u.rank() != 1)
        throw shape_error("cosine_similarity: expected equal 1-D shapes, got " +
                          shape_str(u.shape()) + " and " + shape_str(v.shape()));
    const int d = u.dim(0);
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (int j = 0; j < d; ++j) {
        dot += u(j) * v(j);
        nu += u(j) * u(j);
        nv += v(j) * v(j);
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu == 0.0 || nv == 0.0)
        throw numeric_error("cosine_similarity: degenerate zero-norm vector");
    const double c = dot / (nu * nv);
    return make_op({1}, {c}, {u, v}, [u, v, c, nu, nv, d](Node& o) {
        const double g = o.grad[0];
        if (u.requires_grad()) {
            Node& n = *u.node();
            n.ensure_grad();
            for (int j = 0; j < d; ++j)
                n.grad[j] += g * (v(j) / (nu * nv) - c * u(j) / (nu * nu));
        }
        if (v.requires_grad()) {
            Node& n = *v.node();
            n.ensure_grad();
            for (int j = 0; j < d; ++j)
                n.grad[j] += g * (u(j) / (nu * nv) - c * v(j) / (nv * nv));
        }
    });
}

Tensor pairwise_neg_euclidean(const Tensor& v, const Tensor& t) {
    check_2d(v, "pairwise_neg_euclidean");
    check_2d(t, "pairwise_neg_euclidean");
    if (v.dim(1) != t.dim(1))
        throw shape_error("pairwise_neg_euclidean: feature dims differ, " +
                          shape_str(v.shape()) + " vs " + shape_str(t.shape()));
    const int l = v.dim(0), n = t.dim(0), d = v.dim(1);
    std::vector<double> out(static_cast<std::size_t>(l) * n);
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < d; ++p) {
                const double diff = v(i, p) - t(j, p);
                s += diff * diff;
            }
            out[static_cast<std::size_t>(i) * n + j] = -std::sqrt(s);
        }
    auto dist = std::make_shared<std::vector<double>>(out);
    return make_op({l, n}, std::move(out), {v, t}, [v, t, dist, l, n, d](Node& o) {
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < n; ++j) {
                const double dij = -(*dist)[static_cast<std::size_t>(i) * n + j];
                if (dij == 0.0) continue;  // flat point, no useful direction
                const double g = o.grad[static_cast<std::size_t>(i) * n + j] / dij;
                for (int p = 0; p < d; ++p) {
                    const double diff = v(i, p) - t(j, p);
                    if (v.requires_grad()) {
                        Node& nv = *v.node();
                        nv.ensure_grad();
                        nv.grad[static_cast<std::size_t>(i) * d + p] -= g * diff;
                    }
                    if (t.requires_grad()) {
                        Node& nt = *t.node();
                        nt.ensure_grad();
                        nt.grad[static_cast<std::size_t>(j) * d + p] += g * diff;
                    }
                }
            }
    });
}

Tensor cross_entropy_from_similarities(const Tensor& sims, int label, double tau) {
    if (sims.rank() != 1) throw shape_error("cross_entropy: sims must be 1-D");
    if (tau <= 0) throw config_error("cross_entropy: tau must be positive");
    const int n = sims.dim(0);
    if (label < 0 || label >= n)
        throw index_error("cross_entropy: label " + std::to_string(label) +
                          " out of range [0," + std::to_string(n) + ")");
    double mx = sims(0) / tau;
    for (int j = 1; j < n; ++j) mx = std::max(mx, sims(j) / tau);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(sims(j) / tau - mx);
    const double loss = std::log(denom) + mx - sims(label) / tau;
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        (*probs)[static_cast<std::size_t>(j)] = std::exp(sims(j) / tau - mx) / denom;
    return make_op({1}, {loss}, {sims}, [sims, probs, label, tau, n](Node& o) {
        if (!sims.requires_grad()) return;
        Node& ns = *sims.node();
        ns.ensure_grad();
        const double g = o.grad[0];
        for (int j = 0; j < n; ++j) {
            const double p = (*probs)[static_cast<std::size_t>(j)];
            ns.grad[j] += g * (p - (j == label ? 1.0 : 0.0)) / tau;
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor reduce_sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op({1}, {s}, {x}, [x](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        for (auto& g : nx.grad) g += o.grad[0];
    });
}

Tensor reduce_mean(const Tensor& x) {
    if (x.numel() == 0) throw shape_error("reduce_mean: empty tensor");
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op({1}, {s * inv}, {x}, [x, inv](Node& o) {
        if (!x.requires_grad()) return;
        Node& nx = *x.node();
        nx.ensure_grad();
        for (auto& g : nx.grad) g += o.grad[0] * inv;
    });
}

}  // namespace atha
