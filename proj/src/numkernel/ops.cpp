#include "memformer/numkernel/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace memformer {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void fail(const std::string& op, const std::string& message) {
    throw std::invalid_argument(op + ": " + message);
}

std::size_t last_extent(const Tensor& x, const char* op) {
    if (x.rank() == 0) {
        fail(op, "expected rank >= 1, got a scalar");
    }
    return x.shape().back();
}

bool is_suffix(const Shape& whole, const Shape& tail) {
    if (tail.size() > whole.size()) {
        return false;
    }
    return std::equal(tail.rbegin(), tail.rend(), whole.rbegin());
}

Shape leading(const Shape& s, std::size_t drop) {
    return Shape(s.begin(), s.end() - static_cast<std::ptrdiff_t>(drop));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (!is_suffix(a.shape(), b.shape())) {
        fail("add", "cannot broadcast " + shape_string(b.shape()) + " onto " + shape_string(a.shape()));
    }
    const std::size_t inner = b.size();
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bd[i % inner];
    }
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add", [inner](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i % inner] += self.grad[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail("mul", "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    std::vector<double> out(a.size());
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ad[i] * bd[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pb.data[i];
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pa.data[i];
            }
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) {
        v *= factor;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "scale", [factor](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += factor * self.grad[i];
        }
    });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
    if (w.rank() != 2) {
        fail("matmul", "weight must be rank 2, got " + shape_string(w.shape()));
    }
    const std::size_t n = last_extent(x, "matmul");
    const std::size_t m = w.dim(1);
    if (w.dim(0) != n) {
        fail("matmul", "inner extents differ: " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
    }
    const auto rows = static_cast<Eigen::Index>(x.size() / n);
    const auto ni = static_cast<Eigen::Index>(n);
    const auto mi = static_cast<Eigen::Index>(m);
    std::vector<double> out(x.size() / n * m);
    MutMap(out.data(), rows, mi).noalias() = ConstMap(x.data().data(), rows, ni) * ConstMap(w.data().data(), ni, mi);
    Shape shape = leading(x.shape(), 1);
    shape.push_back(m);
    return Tensor::make_result(std::move(shape), std::move(out), {x, w}, "matmul", [rows, ni, mi](Node& self) {
        Node& px = parent(self, 0);
        Node& pw = parent(self, 1);
        ConstMap dy(self.grad.data(), rows, mi);
        if (px.requires_grad) {
            MutMap(px.grad_buffer().data(), rows, ni).noalias() += dy * ConstMap(pw.data.data(), ni, mi).transpose();
        }
        if (pw.requires_grad) {
            MutMap(pw.grad_buffer().data(), ni, mi).noalias() += ConstMap(px.data.data(), rows, ni).transpose() * dy;
        }
    });
}

Tensor matmul_nt(const Tensor& x, const Tensor& w) {
    if (w.rank() < 2) {
        fail("matmul_nt", "weight must have rank >= 2, got " + shape_string(w.shape()));
    }
    const std::size_t n = last_extent(x, "matmul_nt");
    const std::size_t m = w.dim(0);
    if (w.size() / m != n) {
        fail("matmul_nt", "inner extents differ: " + shape_string(x.shape()) + " x " + shape_string(w.shape()) + "^T");
    }
    const auto rows = static_cast<Eigen::Index>(x.size() / n);
    const auto ni = static_cast<Eigen::Index>(n);
    const auto mi = static_cast<Eigen::Index>(m);
    std::vector<double> out(x.size() / n * m);
    MutMap(out.data(), rows, mi).noalias() =
        ConstMap(x.data().data(), rows, ni) * ConstMap(w.data().data(), mi, ni).transpose();
    Shape shape = leading(x.shape(), 1);
    shape.push_back(m);
    return Tensor::make_result(std::move(shape), std::move(out), {x, w}, "matmul_nt", [rows, ni, mi](Node& self) {
        Node& px = parent(self, 0);
        Node& pw = parent(self, 1);
        ConstMap dy(self.grad.data(), rows, mi);
        if (px.requires_grad) {
            MutMap(px.grad_buffer().data(), rows, ni).noalias() += dy * ConstMap(pw.data.data(), mi, ni);
        }
        if (pw.requires_grad) {
            MutMap(pw.grad_buffer().data(), mi, ni).noalias() += dy.transpose() * ConstMap(px.data.data(), rows, ni);
        }
    });
}

namespace {

struct BatchDims {
    std::size_t batch;
    Eigen::Index n, k, m;
};

// Shared implementation of bmm / bmm_nt. When `b_transposed` the right-hand
// operand is stored as [..., m, k].
Tensor batched_product(const Tensor& a, const Tensor& b, bool b_transposed, const char* op) {
    if (a.rank() < 2 || b.rank() != a.rank()) {
        fail(op, "operands must share rank >= 2, got " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    const Shape lead = leading(a.shape(), 2);
    if (leading(b.shape(), 2) != lead) {
        fail(op, "batch axes differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    const std::size_t r = a.rank();
    const std::size_t n = a.shape()[r - 2];
    const std::size_t k = a.shape()[r - 1];
    const std::size_t bk = b_transposed ? b.shape()[r - 1] : b.shape()[r - 2];
    const std::size_t m = b_transposed ? b.shape()[r - 2] : b.shape()[r - 1];
    if (bk != k) {
        fail(op, "inner extents differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    const BatchDims d{shape_size(lead), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k),
                      static_cast<Eigen::Index>(m)};
    std::vector<double> out(d.batch * n * m);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t s = 0; s < d.batch; ++s) {
        ConstMap as(ad + s * n * k, d.n, d.k);
        MutMap os(out.data() + s * n * m, d.n, d.m);
        if (b_transposed) {
            os.noalias() = as * ConstMap(bd + s * m * k, d.m, d.k).transpose();
        } else {
            os.noalias() = as * ConstMap(bd + s * k * m, d.k, d.m);
        }
    }
    Shape shape = lead;
    shape.push_back(n);
    shape.push_back(m);
    return Tensor::make_result(std::move(shape), std::move(out), {a, b}, op, [d, b_transposed](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const auto nk = static_cast<std::size_t>(d.n * d.k);
        const auto km = static_cast<std::size_t>(d.k * d.m);
        const auto nm = static_cast<std::size_t>(d.n * d.m);
        for (std::size_t s = 0; s < d.batch; ++s) {
            ConstMap dy(self.grad.data() + s * nm, d.n, d.m);
            if (pa.requires_grad) {
                MutMap ga(pa.grad_buffer().data() + s * nk, d.n, d.k);
                if (b_transposed) {
                    ga.noalias() += dy * ConstMap(pb.data.data() + s * km, d.m, d.k);
                } else {
                    ga.noalias() += dy * ConstMap(pb.data.data() + s * km, d.k, d.m).transpose();
                }
            }
            if (pb.requires_grad) {
                ConstMap as(pa.data.data() + s * nk, d.n, d.k);
                if (b_transposed) {
                    MutMap(pb.grad_buffer().data() + s * km, d.m, d.k).noalias() += dy.transpose() * as;
                } else {
                    MutMap(pb.grad_buffer().data() + s * km, d.k, d.m).noalias() += as.transpose() * dy;
                }
            }
        }
    });
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) { return batched_product(a, b, false, "bmm"); }

Tensor bmm_nt(const Tensor& a, const Tensor& b) { return batched_product(a, b, true, "bmm_nt"); }

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) {
        v = v > 0.0 ? v : 0.0;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
        Node& px = parent(self, 0);
        auto& g = px.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (px.data[i] > 0.0) {
                g[i] += self.grad[i];
            }
        }
    });
}

Tensor softmax_rows(const Tensor& logits) {
    const std::size_t n = last_extent(logits, "softmax_rows");
    auto in = logits.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (!std::isfinite(in[i])) {
            throw std::domain_error("softmax_rows: non-finite logit at flat index " + std::to_string(i));
        }
    }
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < in.size(); r += n) {
        const double peak = *std::max_element(in.begin() + static_cast<std::ptrdiff_t>(r),
                                              in.begin() + static_cast<std::ptrdiff_t>(r + n));
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[r + j] = std::exp(in[r + j] - peak);
            total += out[r + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[r + j] /= total;
        }
    }
    return Tensor::make_result(logits.shape(), std::move(out), {logits}, "softmax_rows", [n](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        const auto& y = self.data;
        for (std::size_t r = 0; r < y.size(); r += n) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += self.grad[r + j] * y[r + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                g[r + j] += y[r + j] * (self.grad[r + j] - dot);
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t n = last_extent(x, "layer_norm");
    if (!(eps > 0.0)) {
        fail("layer_norm", "eps must be positive");
    }
    if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
        fail("layer_norm", "gain/bias must have shape [" + std::to_string(n) + "], got " +
                               shape_string(gain.shape()) + " and " + shape_string(bias.shape()));
    }
    auto in = x.data();
    auto gd = gain.data();
    auto bd = bias.data();
    const std::size_t rows = in.size() / n;
    std::vector<double> normalized(in.size());
    std::vector<double> inv_std(rows);
    std::vector<double> out(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += row[j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            var += (row[j] - mu) * (row[j] - mu);
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * inv_std[r];
            normalized[r * n + j] = h;
            out[r * n + j] = gd[j] * h + bd[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
        [n, rows, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
            Node& px = parent(self, 0);
            Node& pg = parent(self, 1);
            Node& pb = parent(self, 2);
            if (pg.requires_grad) {
                auto& g = pg.grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    g[i % n] += self.grad[i] * normalized[i];
                }
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    g[i % n] += self.grad[i];
                }
            }
            if (px.requires_grad) {
                auto& g = px.grad_buffer();
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[r * n + j] * pg.data[j];
                        mean_dh += dh;
                        mean_dh_h += dh * normalized[r * n + j];
                    }
                    mean_dh *= inv_n;
                    mean_dh_h *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[r * n + j] * pg.data[j];
                        g[r * n + j] += inv_std[r] * (dh - mean_dh - normalized[r * n + j] * mean_dh_h);
                    }
                }
            }
        });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        fail("dropout", "rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(x.size());
    std::vector<double> out(x.size());
    auto in = x.data();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = keep(rng) ? keep_scale : 0.0;
        out[i] = in[i] * mask[i];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "dropout", [mask = std::move(mask)](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * mask[i];
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) {
        total += v;
    }
    return Tensor::make_result({}, {total}, {x}, "sum", [](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (auto& v : g) {
            v += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
    if (logits.rank() != 2) {
        fail("cross_entropy", "logits must be [B, C], got " + shape_string(logits.shape()));
    }
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (targets.size() != batch) {
        fail("cross_entropy", "expected " + std::to_string(batch) + " targets, got " + std::to_string(targets.size()));
    }
    auto in = logits.data();
    std::vector<double> probs(in.size());
    std::vector<std::size_t> labels(targets.begin(), targets.end());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] >= classes) {
            fail("cross_entropy", "target " + std::to_string(labels[b]) + " out of range for " +
                                      std::to_string(classes) + " classes");
        }
        const double* row = in.data() + b * classes;
        const double peak = *std::max_element(row, row + classes);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            probs[b * classes + c] = std::exp(row[c] - peak);
            total += probs[b * classes + c];
        }
        for (std::size_t c = 0; c < classes; ++c) {
            probs[b * classes + c] /= total;
        }
        loss += peak + std::log(total) - row[labels[b]];
    }
    loss /= static_cast<double>(batch);
    return Tensor::make_result(
        {}, {loss}, {logits}, "cross_entropy",
        [batch, classes, probs = std::move(probs), labels = std::move(labels)](Node& self) {
            auto& g = parent(self, 0).grad_buffer();
            const double upstream = self.grad[0] / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t c = 0; c < classes; ++c) {
                    const double target = c == labels[b] ? 1.0 : 0.0;
                    g[b * classes + c] += upstream * (probs[b * classes + c] - target);
                }
            }
        });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        fail("reshape", "cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i];
        }
    });
}

Tensor tile(const Tensor& x, std::size_t copies) {
    if (copies == 0) {
        fail("tile", "copy count must be positive");
    }
    const std::size_t n = x.size();
    std::vector<double> out;
    out.reserve(n * copies);
    for (std::size_t c = 0; c < copies; ++c) {
        out.insert(out.end(), x.data().begin(), x.data().end());
    }
    Shape shape{copies};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "tile", [n](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            g[i % n] += self.grad[i];
        }
    });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    const std::size_t na = last_extent(a, "concat_last");
    const std::size_t nb = last_extent(b, "concat_last");
    if (leading(a.shape(), 1) != leading(b.shape(), 1)) {
        fail("concat_last", "leading axes differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    const std::size_t rows = a.size() / na;
    const std::size_t width = na + nb;
    std::vector<double> out(rows * width);
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>(r * na), na, out.begin() + static_cast<std::ptrdiff_t>(r * width));
        std::copy_n(bd.begin() + static_cast<std::ptrdiff_t>(r * nb), nb,
                    out.begin() + static_cast<std::ptrdiff_t>(r * width + na));
    }
    Shape shape = leading(a.shape(), 1);
    shape.push_back(width);
    return Tensor::make_result(std::move(shape), std::move(out), {a, b}, "concat_last", [rows, na, nb](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const std::size_t width = na + nb;
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < na; ++j) {
                    g[r * na + j] += self.grad[r * width + j];
                }
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < nb; ++j) {
                    g[r * nb + j] += self.grad[r * width + na + j];
                }
            }
        }
    });
}

Tensor prepend_token(const Tensor& first, const Tensor& seq) {
    if (seq.rank() != 3) {
        fail("prepend_token", "sequence must be [B, N, K], got " + shape_string(seq.shape()));
    }
    const std::size_t batch = seq.dim(0);
    const std::size_t tokens = seq.dim(1);
    const std::size_t width = seq.dim(2);
    if (first.shape() != Shape{width}) {
        fail("prepend_token", "token must be [" + std::to_string(width) + "], got " + shape_string(first.shape()));
    }
    std::vector<double> out(batch * (tokens + 1) * width);
    auto fd = first.data();
    auto sd = seq.data();
    for (std::size_t b = 0; b < batch; ++b) {
        auto dst = out.begin() + static_cast<std::ptrdiff_t>(b * (tokens + 1) * width);
        std::copy(fd.begin(), fd.end(), dst);
        std::copy_n(sd.begin() + static_cast<std::ptrdiff_t>(b * tokens * width), tokens * width,
                    dst + static_cast<std::ptrdiff_t>(width));
    }
    return Tensor::make_result({batch, tokens + 1, width}, std::move(out), {first, seq}, "prepend_token",
                               [batch, tokens, width](Node& self) {
                                   Node& pf = parent(self, 0);
                                   Node& ps = parent(self, 1);
                                   const std::size_t stride = (tokens + 1) * width;
                                   if (pf.requires_grad) {
                                       auto& g = pf.grad_buffer();
                                       for (std::size_t b = 0; b < batch; ++b) {
                                           for (std::size_t j = 0; j < width; ++j) {
                                               g[j] += self.grad[b * stride + j];
                                           }
                                       }
                                   }
                                   if (ps.requires_grad) {
                                       auto& g = ps.grad_buffer();
                                       for (std::size_t b = 0; b < batch; ++b) {
                                           for (std::size_t i = 0; i < tokens * width; ++i) {
                                               g[b * tokens * width + i] += self.grad[b * stride + width + i];
                                           }
                                       }
                                   }
                               });
}

Tensor select_token(const Tensor& seq, std::size_t index) {
    if (seq.rank() != 3) {
        fail("select_token", "sequence must be [B, T, K], got " + shape_string(seq.shape()));
    }
    const std::size_t batch = seq.dim(0);
    const std::size_t tokens = seq.dim(1);
    const std::size_t width = seq.dim(2);
    if (index >= tokens) {
        fail("select_token", "index " + std::to_string(index) + " out of range for " + std::to_string(tokens) + " tokens");
    }
    std::vector<double> out(batch * width);
    auto sd = seq.data();
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(sd.begin() + static_cast<std::ptrdiff_t>((b * tokens + index) * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(b * width));
    }
    return Tensor::make_result({batch, width}, std::move(out), {seq}, "select_token",
                               [batch, tokens, width, index](Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t b = 0; b < batch; ++b) {
                                       for (std::size_t j = 0; j < width; ++j) {
                                           g[(b * tokens + index) * width + j] += self.grad[b * width + j];
                                       }
                                   }
                               });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
    if (x.rank() != 3) {
        fail("split_heads", "input must be [B, T, K], got " + shape_string(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t tokens = x.dim(1);
    const std::size_t width = x.dim(2);
    if (heads == 0 || width % heads != 0) {
        fail("split_heads", std::to_string(heads) + " heads do not divide width " + std::to_string(width));
    }
    const std::size_t hd = width / heads;
    std::vector<double> out(x.size());
    auto in = x.data();
    // out[b, h, t, e] = in[b, t, h * hd + e]
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t t = 0; t < tokens; ++t) {
                std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((b * tokens + t) * width + h * hd), hd,
                            out.begin() + static_cast<std::ptrdiff_t>(((b * heads + h) * tokens + t) * hd));
            }
        }
    }
    return Tensor::make_result({batch, heads, tokens, hd}, std::move(out), {x}, "split_heads",
                               [batch, heads, tokens, hd](Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   const std::size_t width = heads * hd;
                                   for (std::size_t b = 0; b < batch; ++b) {
                                       for (std::size_t h = 0; h < heads; ++h) {
                                           for (std::size_t t = 0; t < tokens; ++t) {
                                               for (std::size_t e = 0; e < hd; ++e) {
                                                   g[(b * tokens + t) * width + h * hd + e] +=
                                                       self.grad[((b * heads + h) * tokens + t) * hd + e];
                                               }
                                           }
                                       }
                                   }
                               });
}

Tensor merge_heads(const Tensor& x) {
    if (x.rank() != 4) {
        fail("merge_heads", "input must be [B, h, T, d], got " + shape_string(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t heads = x.dim(1);
    const std::size_t tokens = x.dim(2);
    const std::size_t hd = x.dim(3);
    const std::size_t width = heads * hd;
    std::vector<double> out(x.size());
    auto in = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t t = 0; t < tokens; ++t) {
                std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(((b * heads + h) * tokens + t) * hd), hd,
                            out.begin() + static_cast<std::ptrdiff_t>((b * tokens + t) * width + h * hd));
            }
        }
    }
    return Tensor::make_result({batch, tokens, width}, std::move(out), {x}, "merge_heads",
                               [batch, heads, tokens, hd](Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   const std::size_t width = heads * hd;
                                   for (std::size_t b = 0; b < batch; ++b) {
                                       for (std::size_t h = 0; h < heads; ++h) {
                                           for (std::size_t t = 0; t < tokens; ++t) {
                                               for (std::size_t e = 0; e < hd; ++e) {
                                                   g[((b * heads + h) * tokens + t) * hd + e] +=
                                                       self.grad[(b * tokens + t) * width + h * hd + e];
                                               }
                                           }
                                       }
                                   }
                               });
}

}  // namespace memformer
