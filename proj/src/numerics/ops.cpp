#include "nara/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nara/kernels.hpp"

namespace nara {
namespace {

using detail::Node;
using GradFn = std::function<void(Node&)>;

void check_finite([[maybe_unused]] const std::vector<double>& v, [[maybe_unused]] const char* op) {
#ifdef NARA_CHECK_FINITE
    for (double x : v) {
        if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value produced by ") + op);
    }
#endif
}

Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::initializer_list<const Tensor*> inputs, GradFn fn) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool track = false;
    if (grad_enabled()) {
        for (const Tensor* t : inputs) track = track || t->requires_grad();
    }
    if (track) {
        node->leaf = false;
        node->requires_grad = true;
        for (const Tensor* t : inputs) node->parents.push_back(t->node());
        node->backward_fn = std::move(fn);
    }
    node->seq = detail::next_seq();
    return Tensor::from_node(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::span<const Tensor> inputs, GradFn fn) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool track = false;
    if (grad_enabled()) {
        for (const Tensor& t : inputs) track = track || t.requires_grad();
    }
    if (track) {
        node->leaf = false;
        node->requires_grad = true;
        for (const Tensor& t : inputs) node->parents.push_back(t.node());
        node->backward_fn = std::move(fn);
    }
    node->seq = detail::next_seq();
    return Tensor::from_node(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.ndim() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
    }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_result({m, n}, std::move(out), "matmul", {&a, &b}, [m, k, n](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            std::vector<double> ga(m * k, 0.0);
            kernels::gemm_nt(self.grad.data(), pb.value.data(), ga.data(), m, n, k);
            pa.accumulate(ga);
        }
        if (pb.requires_grad) {
            std::vector<double> gb(k * n, 0.0);
            kernels::gemm_tn(pa.value.data(), self.grad.data(), gb.data(), k, m, n);
            pb.accumulate(gb);
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) {
        throw DimensionError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) +
                             " · " + shape_str(b.shape()) + "ᵀ");
    }
    std::vector<double> out(m * n, 0.0);
    kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_result({m, n}, std::move(out), "matmul_nt", {&a, &b}, [m, k, n](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            std::vector<double> ga(m * k, 0.0);
            kernels::gemm_nn(self.grad.data(), pb.value.data(), ga.data(), m, n, k);
            pa.accumulate(ga);
        }
        if (pb.requires_grad) {
            std::vector<double> gb(n * k, 0.0);
            kernels::gemm_tn(self.grad.data(), pa.value.data(), gb.data(), n, m, k);
            pb.accumulate(gb);
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    auto src = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
    return make_result({n, m}, std::move(out), "transpose", {&a}, [m, n](Node& self) {
        std::vector<double> g(m * n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] = self.grad[j * m + i];
        parent(self, 0).accumulate(g);
    });
}

namespace {

enum class Bcast { None, Left, Right };  // which operand is the one-element tensor

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (same_shape(a, b)) return Bcast::None;
    if (b.numel() == 1) return Bcast::Right;
    if (a.numel() == 1) return Bcast::Left;
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are not compatible");
}

double total(std::span<const double> g) {
    double s = 0.0;
    for (double x : g) s += x;
    return s;
}

Tensor add_sub(const Tensor& a, const Tensor& b, double sign, const char* op) {
    const Bcast kind = broadcast_kind(a, b, op);
    const Tensor& big = kind == Bcast::Left ? b : a;
    std::vector<double> out(big.numel());
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = kind == Bcast::Left ? da[0] : da[i];
        const double y = kind == Bcast::Right ? db[0] : db[i];
        out[i] = x + sign * y;
    }
    return make_result(big.shape(), std::move(out), op, {&a, &b}, [kind, sign](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            if (kind == Bcast::Left) pa.accumulate(std::vector<double>{total(self.grad)});
            else pa.accumulate(self.grad);
        }
        if (pb.requires_grad) {
            if (kind == Bcast::Right) {
                pb.accumulate(std::vector<double>{sign * total(self.grad)});
            } else if (sign == 1.0) {
                pb.accumulate(self.grad);
            } else {
                std::vector<double> g(self.grad);
                for (double& x : g) x = -x;
                pb.accumulate(g);
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_sub(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_sub(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
    const Bcast kind = broadcast_kind(a, b, "mul");
    const Tensor& big = kind == Bcast::Left ? b : a;
    std::vector<double> out(big.numel());
    auto da = a.data(), db = b.data();
    if (kind == Bcast::None) {
        kernels::active().mul(da.data(), db.data(), out.data(), out.size());
    } else {
        const double s = kind == Bcast::Right ? db[0] : da[0];
        const auto src = kind == Bcast::Right ? da : db;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * s;
    }
    return make_result(big.shape(), std::move(out), "mul", {&a, &b}, [kind](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const auto& g = self.grad;
        auto grad_for = [&](Node& mine, Node& other, bool mine_is_scalar, bool other_is_scalar) {
            if (!mine.requires_grad) return;
            if (mine_is_scalar) {
                double s = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * other.value[i];
                mine.accumulate(std::vector<double>{s});
            } else {
                std::vector<double> out(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                    out[i] = g[i] * (other_is_scalar ? other.value[0] : other.value[i]);
                mine.accumulate(out);
            }
        };
        grad_for(pa, pb, kind == Bcast::Left, kind == Bcast::Right);
        grad_for(pb, pa, kind == Bcast::Right, kind == Bcast::Left);
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    kernels::active().scale(s, out.data(), out.size());
    return make_result(a.shape(), std::move(out), "scale", {&a}, [s](Node& self) {
        std::vector<double> g(self.grad);
        kernels::active().scale(s, g.data(), g.size());
        parent(self, 0).accumulate(g);
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& x : out) x += s;
    return make_result(a.shape(), std::move(out), "add_scalar", {&a},
                       [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_bias");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (bias.numel() != n) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match rows of " +
                             shape_str(x.shape()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    const double* b = bias.data().data();
    for (std::size_t i = 0; i < m; ++i) kernels::active().add(b, out.data() + i * n, n);
    return make_result({m, n}, std::move(out), "add_bias", {&x, &bias}, [m, n](Node& self) {
        Node& px = parent(self, 0);
        Node& pb = parent(self, 1);
        if (px.requires_grad) px.accumulate(self.grad);
        if (pb.requires_grad) {
            std::vector<double> g(n, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
            pb.accumulate(g);
        }
    });
}

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto d = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] / (1.0 + std::exp(-d[i]));
    return make_result(x.shape(), std::move(out), "silu", {&x}, [](Node& self) {
        Node& px = parent(self, 0);
        std::vector<double> g(self.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = px.value[i];
            const double sig = 1.0 / (1.0 + std::exp(-v));
            g[i] = self.grad[i] * sig * (1.0 + v * (1.0 - sig));
        }
        px.accumulate(g);
    });
}

Tensor log(const Tensor& x) {
    std::vector<double> out(x.numel());
    auto d = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(d[i] > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(d[i]) + " at index " +
                              std::to_string(i));
        }
        out[i] = std::log(d[i]);
    }
    return make_result(x.shape(), std::move(out), "log", {&x}, [](Node& self) {
        Node& px = parent(self, 0);
        std::vector<double> g(self.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / px.value[i];
        px.accumulate(g);
    });
}

namespace {

std::pair<std::size_t, std::size_t> row_layout(const Tensor& x) {
    if (x.ndim() == 1) return {1, x.shape()[0]};
    require_matrix(x, "row op");
    return {x.shape()[0], x.shape()[1]};
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
    const auto [m, n] = row_layout(x);
    std::vector<double> out(m * n);
    auto d = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = d.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    return make_result(x.shape(), std::move(out), "softmax_rows", {&x}, [m, n](Node& self) {
        std::vector<double> g(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.value.data() + i * n;
            const double* gy = self.grad.data() + i * n;
            double dotp = 0.0;
            for (std::size_t j = 0; j < n; ++j) dotp += gy[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] = y[j] * (gy[j] - dotp);
        }
        parent(self, 0).accumulate(g);
    });
}

Tensor log_softmax_rows(const Tensor& x) {
    const auto [m, n] = row_layout(x);
    std::vector<double> out(m * n);
    auto d = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = d.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
    }
    return make_result(x.shape(), std::move(out), "log_softmax_rows", {&x}, [m, n](Node& self) {
        std::vector<double> g(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.value.data() + i * n;
            const double* gy = self.grad.data() + i * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gy[j];
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] = gy[j] - std::exp(y[j]) * s;
        }
        parent(self, 0).accumulate(g);
    });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const std::size_t nd = parts[0].ndim();
    if (nd > 2 || axis >= nd) throw DimensionError("concat: unsupported axis for " + shape_str(parts[0].shape()));
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw DimensionError("concat: rank mismatch");
        if (nd == 2 && p.shape()[1 - axis] != parts[0].shape()[1 - axis]) {
            throw DimensionError("concat: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
        }
    }
    std::vector<std::size_t> widths;
    std::size_t total_width = 0;
    for (const auto& p : parts) {
        widths.push_back(p.shape()[axis]);
        total_width += p.shape()[axis];
    }
    Shape shape = parts[0].shape();
    shape[axis] = total_width;
    std::vector<double> out;
    out.reserve(shape_numel(shape));
    // Row-major: axis 0 (or 1-D) is a plain append; axis 1 interleaves per row.
    const bool append = nd == 1 || axis == 0;
    const std::size_t rows = append ? 0 : shape[0];
    if (append) {
        for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    } else {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t k = 0; k < parts.size(); ++k) {
                auto d = parts[k].data();
                out.insert(out.end(), d.begin() + i * widths[k], d.begin() + (i + 1) * widths[k]);
            }
    }
    return make_result(shape, std::move(out), "concat", parts, [append, rows, widths, total_width](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Node& p = *self.parents[k];
            if (p.requires_grad) {
                std::vector<double> g(p.value.size());
                if (append) {
                    std::copy_n(self.grad.begin() + offset, g.size(), g.begin());
                } else {
                    for (std::size_t i = 0; i < rows; ++i)
                        std::copy_n(self.grad.begin() + i * total_width + offset, widths[k],
                                    g.begin() + i * widths[k]);
                }
                p.accumulate(g);
            }
            offset += append ? p.value.size() : widths[k];
        }
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    require_matrix(x, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin >= end || end > n) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of bounds for " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<double> out(m * w);
    auto d = x.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(d.begin() + i * n + begin, w, out.begin() + i * w);
    return make_result({m, w}, std::move(out), "slice_cols", {&x}, [m, n, w, begin](Node& self) {
        std::vector<double> g(m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(self.grad.begin() + i * w, w, g.begin() + i * n + begin);
        parent(self, 0).accumulate(g);
    });
}

Tensor gather_rows(const Tensor& x, std::span<const int> index) {
    if (index.empty()) throw DimensionError("gather_rows: empty index");
    const bool vec = x.ndim() == 1;
    if (!vec) require_matrix(x, "gather_rows");
    const std::size_t n = vec ? x.shape()[0] : x.shape()[0];
    const std::size_t w = vec ? 1 : x.shape()[1];
    std::vector<int> idx(index.begin(), index.end());
    std::vector<double> out(idx.size() * w);
    auto d = x.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) {
            throw DimensionError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                                 shape_str(x.shape()));
        }
        std::copy_n(d.begin() + idx[i] * w, w, out.begin() + i * w);
    }
    Shape shape = vec ? Shape{idx.size()} : Shape{idx.size(), w};
    return make_result(shape, std::move(out), "gather_rows", {&x}, [idx, w, n](Node& self) {
        std::vector<double> g(n * w, 0.0);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < w; ++j) g[idx[i] * w + j] += self.grad[i * w + j];
        parent(self, 0).accumulate(g);
    });
}

Tensor pick(const Tensor& x, std::span<const int> index) {
    require_matrix(x, "pick");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (index.size() != m) {
        throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + shape_str(x.shape()));
    }
    std::vector<int> idx(index.begin(), index.end());
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) {
            throw DimensionError("pick: index " + std::to_string(idx[i]) + " out of range");
        }
        out[i] = x.at(i, idx[i]);
    }
    return make_result({m}, std::move(out), "pick", {&x}, [idx, m, n](Node& self) {
        std::vector<double> g(m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) g[i * n + idx[i]] = self.grad[i];
        parent(self, 0).accumulate(g);
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), "reshape", {&x},
                       [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Tensor sum(const Tensor& x) {
    return make_result({1}, {total(x.data())}, "sum", {&x}, [](Node& self) {
        Node& px = parent(self, 0);
        px.accumulate(std::vector<double>(px.value.size(), self.grad[0]));
    });
}

Tensor mean(const Tensor& x) {
    const double n = static_cast<double>(x.numel());
    return make_result({1}, {total(x.data()) / n}, "mean", {&x}, [n](Node& self) {
        Node& px = parent(self, 0);
        px.accumulate(std::vector<double>(px.value.size(), self.grad[0] / n));
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (gain.numel() != n || bias.numel() != n) {
        throw DimensionError("layer_norm: gain/bias width mismatch with " + shape_str(x.shape()));
    }
    std::vector<double> out(m * n);
    std::vector<double> xhat(m * n);
    std::vector<double> inv_std(m);
    auto d = x.data();
    auto g = gain.data();
    auto b = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = d.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mu) * inv_std[i];
            out[i * n + j] = g[j] * xhat[i * n + j] + b[j];
        }
    }
    return make_result({m, n}, std::move(out), "layer_norm", {&x, &gain, &bias},
                       [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           Node& px = parent(self, 0);
                           Node& pg = parent(self, 1);
                           Node& pb = parent(self, 2);
                           if (px.requires_grad) {
                               std::vector<double> gx(m * n);
                               for (std::size_t i = 0; i < m; ++i) {
                                   double mean_g = 0.0, mean_gx = 0.0;
                                   for (std::size_t j = 0; j < n; ++j) {
                                       const double gh = self.grad[i * n + j] * pg.value[j];
                                       mean_g += gh;
                                       mean_gx += gh * xhat[i * n + j];
                                   }
                                   mean_g /= static_cast<double>(n);
                                   mean_gx /= static_cast<double>(n);
                                   for (std::size_t j = 0; j < n; ++j) {
                                       const double gh = self.grad[i * n + j] * pg.value[j];
                                       gx[i * n + j] = inv_std[i] * (gh - mean_g - xhat[i * n + j] * mean_gx);
                                   }
                               }
                               px.accumulate(gx);
                           }
                           if (pg.requires_grad) {
                               std::vector<double> gg(n, 0.0);
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j)
                                       gg[j] += self.grad[i * n + j] * xhat[i * n + j];
                               pg.accumulate(gg);
                           }
                           if (pb.requires_grad) {
                               std::vector<double> gb(n, 0.0);
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                               pb.accumulate(gb);
                           }
                       });
}

Tensor mul_const(const Tensor& x, std::span<const double> mask) {
    if (mask.size() != x.numel()) throw DimensionError("mul_const: mask length mismatch");
    std::vector<double> m(mask.begin(), mask.end());
    std::vector<double> out(x.numel());
    kernels::active().mul(x.data().data(), m.data(), out.data(), out.size());
    return make_result(x.shape(), std::move(out), "mul_const", {&x}, [m = std::move(m)](Node& self) {
        std::vector<double> g(self.grad.size());
        kernels::active().mul(self.grad.data(), m.data(), g.data(), g.size());
        parent(self, 0).accumulate(g);
    });
}

}  // namespace nara
