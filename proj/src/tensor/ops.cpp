#include "air/tensor/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace air {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return MatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return ConstMatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

void require_same_shape(const std::string& op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void require_rank(const std::string& op, const Var& x, std::size_t rank) {
    if (x.value().rank() != rank) {
        shape_error(op, "expected rank " + std::to_string(rank) + ", got shape " +
                            shape_str(x.shape()));
    }
}

/// Gradient buffer of input `i`, or nullptr when it needs none.
Tensor* input_grad(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

// Vectorised exp. Eigen would peel unaligned leading elements onto the
// scalar path, making results depend on the buffer address, so values go
// through an aligned scratch buffer padded to whole packets.
void vec_exp(std::span<double> v) {
    constexpr Eigen::Index kPad = 16;
    thread_local Eigen::ArrayXd buf;
    const auto n = static_cast<Eigen::Index>(v.size());
    buf.resize((n + kPad - 1) / kPad * kPad);
    Eigen::Map<Eigen::ArrayXd> a(v.data(), n);
    buf.head(n) = a;
    buf.tail(buf.size() - n).setZero();
    buf = buf.exp();
    a = buf.head(n);
}

void vec_tanh(std::span<double> v) {
    for (double& x : v) x *= 2.0;
    vec_exp(v);
    for (double& x : v) x = 1.0 - 2.0 / (x + 1.0);
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
    return make_op("add", std::move(y), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (Tensor* g = input_grad(self, k)) {
                for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
    return make_op("sub", std::move(y), {a, b}, [](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
        }
        if (Tensor* g = input_grad(self, 1)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
    return make_op("mul", std::move(y), {a, b}, [](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * bv[i];
        }
        if (Tensor* g = input_grad(self, 1)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * av[i];
        }
    });
}

Var scale(const Var& a, double factor) {
    Tensor y = a.value();
    for (double& v : y.data()) v *= factor;
    return make_op("scale", std::move(y), {a}, [factor](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * factor;
        }
    });
}

Var tanh(const Var& a) {
    Tensor y = a.value();
    vec_tanh(y.data());
    return make_op("tanh", std::move(y), {a}, [](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
        }
    });
}

Var gelu(const Var& a) {
    const Tensor& x = a.value();
    Tensor t(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) t[i] = kGeluC * (x[i] + 0.044715 * x[i] * x[i] * x[i]);
    vec_tanh(t.data());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 0.5 * x[i] * (1.0 + t[i]);
    return make_op("gelu", std::move(y), {a}, [t = std::move(t)](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            const Tensor& x = self.inputs[0]->value;
            for (std::size_t i = 0; i < x.numel(); ++i) {
                const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x[i] * x[i]);
                (*g)[i] += self.grad[i] * (0.5 * (1.0 + t[i]) + 0.5 * x[i] * (1.0 - t[i] * t[i]) * du);
            }
        }
    });
}

Var silu(const Var& a) {
    const Tensor& x = a.value();
    Tensor s(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) s[i] = -x[i];
    vec_exp(s.data());
    for (double& v : s.data()) v = 1.0 / (1.0 + v);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * s[i];
    return make_op("silu", std::move(y), {a}, [s = std::move(s)](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            const Tensor& x = self.inputs[0]->value;
            for (std::size_t i = 0; i < x.numel(); ++i) (*g)[i] += self.grad[i] * s[i] * (1.0 + x[i] * (1.0 - s[i]));
        }
    });
}

Var add_row(const Var& x, const Var& v) {
    require_rank("add_row", v, 1);
    const std::size_t d = v.dim(0);
    if (x.value().rank() == 0 || x.dim(-1) != d) {
        shape_error("add_row", "cannot add " + shape_str(v.shape()) + " to rows of " +
                                   shape_str(x.shape()));
    }
    Tensor y = x.value();
    const std::size_t rows = y.numel() / d;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] += v.value()[j];
    return make_op("add_row", std::move(y), {x, v}, [rows, d](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
        }
        if (Tensor* g = input_grad(self, 1)) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[r * d + j];
        }
    });
}

Var broadcast_rows(const Var& v, std::size_t batch, std::size_t seq) {
    require_rank("broadcast_rows", v, 1);
    const std::size_t d = v.dim(0);
    Tensor y({batch, seq, d});
    const std::size_t rows = batch * seq;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] = v.value()[j];
    return make_op("broadcast_rows", std::move(y), {v}, [rows, d](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[r * d + j];
        }
    });
}

Var matmul(const Var& x, const Var& w) {
    require_rank("matmul", w, 2);
    const std::size_t k = w.dim(0);
    const std::size_t n = w.dim(1);
    if (x.value().rank() < 1 || x.dim(-1) != k) {
        shape_error("matmul", "inner dimensions differ: " + shape_str(x.shape()) + " @ " +
                                  shape_str(w.shape()));
    }
    const std::size_t m = x.value().numel() / k;
    Shape out_shape = x.shape();
    out_shape.back() = n;
    Tensor y(out_shape);
    as_mat(y, m, n).noalias() = as_mat(x.value(), m, k) * as_mat(w.value(), k, n);
    return make_op("matmul", std::move(y), {x, w}, [m, k, n](Node& self) {
        const auto gy = as_mat(std::as_const(self.grad), m, n);
        if (Tensor* g = input_grad(self, 0)) {
            as_mat(*g, m, k).noalias() += gy * as_mat(self.inputs[1]->value, k, n).transpose();
        }
        if (Tensor* g = input_grad(self, 1)) {
            as_mat(*g, k, n).noalias() += as_mat(self.inputs[0]->value, m, k).transpose() * gy;
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    require_rank("bmm", a, 3);
    require_rank("bmm", b, 3);
    const std::size_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), p = b.dim(2);
    if (b.dim(0) != nb || b.dim(1) != k) {
        shape_error("bmm", "incompatible shapes " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
    }
    Tensor y({nb, m, p});
    for (std::size_t i = 0; i < nb; ++i) {
        as_mat(y, m, p, i * m * p).noalias() =
            as_mat(a.value(), m, k, i * m * k) * as_mat(b.value(), k, p, i * k * p);
    }
    return make_op("bmm", std::move(y), {a, b}, [nb, m, k, p](Node& self) {
        Tensor* ga = input_grad(self, 0);
        Tensor* gb = input_grad(self, 1);
        for (std::size_t i = 0; i < nb; ++i) {
            const auto gy = as_mat(std::as_const(self.grad), m, p, i * m * p);
            if (ga) {
                as_mat(*ga, m, k, i * m * k).noalias() +=
                    gy * as_mat(self.inputs[1]->value, k, p, i * k * p).transpose();
            }
            if (gb) {
                as_mat(*gb, k, p, i * k * p).noalias() +=
                    as_mat(self.inputs[0]->value, m, k, i * m * k).transpose() * gy;
            }
        }
    });
}

Var bmm_nt(const Var& a, const Var& b) {
    require_rank("bmm_nt", a, 3);
    require_rank("bmm_nt", b, 3);
    const std::size_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), p = b.dim(1);
    if (b.dim(0) != nb || b.dim(2) != k) {
        shape_error("bmm_nt", "incompatible shapes " + shape_str(a.shape()) + " @ " +
                                  shape_str(b.shape()) + "^T");
    }
    Tensor y({nb, m, p});
    for (std::size_t i = 0; i < nb; ++i) {
        as_mat(y, m, p, i * m * p).noalias() =
            as_mat(a.value(), m, k, i * m * k) * as_mat(b.value(), p, k, i * p * k).transpose();
    }
    return make_op("bmm_nt", std::move(y), {a, b}, [nb, m, k, p](Node& self) {
        Tensor* ga = input_grad(self, 0);
        Tensor* gb = input_grad(self, 1);
        for (std::size_t i = 0; i < nb; ++i) {
            const auto gy = as_mat(std::as_const(self.grad), m, p, i * m * p);
            if (ga) {
                as_mat(*ga, m, k, i * m * k).noalias() += gy * as_mat(self.inputs[1]->value, p, k, i * p * k);
            }
            if (gb) {
                as_mat(*gb, p, k, i * p * k).noalias() +=
                    gy.transpose() * as_mat(self.inputs[0]->value, m, k, i * m * k);
            }
        }
    });
}

Var softmax_last(const Var& x) {
    if (x.value().rank() == 0) shape_error("softmax_last", "scalar input");
    const std::size_t d = x.dim(-1);
    const std::size_t rows = x.value().numel() / d;
    Tensor y = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = y.data().data() + r * d;
        double mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        for (std::size_t j = 0; j < d; ++j) row[j] -= mx;
    }
    vec_exp(y.data());
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = y.data().data() + r * d;
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) z += row[j];
        for (std::size_t j = 0; j < d; ++j) row[j] /= z;
    }
    return make_op("softmax_last", std::move(y), {x}, [rows, d](Node& self) {
        Tensor* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* p = self.value.data().data() + r * d;
            const double* gy = self.grad.data().data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += p[j] * gy[j];
            for (std::size_t j = 0; j < d; ++j) (*g)[r * d + j] += p[j] * (gy[j] - dot);
        }
    });
}

Var rms_norm(const Var& x, const Var& gain, double eps) {
    require_rank("rms_norm", gain, 1);
    const std::size_t d = gain.dim(0);
    if (x.value().rank() == 0 || x.dim(-1) != d) {
        shape_error("rms_norm", "gain " + shape_str(gain.shape()) + " does not match " +
                                    shape_str(x.shape()));
    }
    const std::size_t rows = x.value().numel() / d;
    Tensor y(x.shape());
    std::vector<double> inv_rms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.value().data().data() + r * d;
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
        inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] = xr[j] * inv_rms[r] * gain.value()[j];
    }
    return make_op("rms_norm", std::move(y), {x, gain}, [rows, d, inv_rms = std::move(inv_rms)](Node& self) {
        const Tensor& xv = self.inputs[0]->value;
        const Tensor& gv = self.inputs[1]->value;
        Tensor* gx = input_grad(self, 0);
        Tensor* gg = input_grad(self, 1);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = xv.data().data() + r * d;
            const double* gy = self.grad.data().data() + r * d;
            const double ir = inv_rms[r];
            if (gg) {
                for (std::size_t j = 0; j < d; ++j) (*gg)[j] += gy[j] * xr[j] * ir;
            }
            if (gx) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += gy[j] * gv[j] * xr[j];
                const double c = dot * ir * ir * ir / static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += gy[j] * gv[j] * ir - xr[j] * c;
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, double eps) {
    require_rank("layer_norm", gain, 1);
    const std::size_t d = gain.dim(0);
    if (x.value().rank() == 0 || x.dim(-1) != d) {
        shape_error("layer_norm", "gain " + shape_str(gain.shape()) + " does not match " +
                                      shape_str(x.shape()));
    }
    const std::size_t rows = x.value().numel() / d;
    const double inv_d = 1.0 / static_cast<double>(d);
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.value().data().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu *= inv_d;
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        inv_std[r] = 1.0 / std::sqrt(var * inv_d + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
            y[r * d + j] = xhat[r * d + j] * gain.value()[j];
        }
    }
    return make_op("layer_norm", std::move(y), {x, gain},
                   [rows, d, inv_d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const Tensor& gv = self.inputs[1]->value;
                       Tensor* gx = input_grad(self, 0);
                       Tensor* gg = input_grad(self, 1);
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* gy = self.grad.data().data() + r * d;
                           const double* xh = xhat.data().data() + r * d;
                           if (gg) {
                               for (std::size_t j = 0; j < d; ++j) (*gg)[j] += gy[j] * xh[j];
                           }
                           if (gx) {
                               double mean_g = 0.0, mean_gx = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double gj = gy[j] * gv[j];
                                   mean_g += gj;
                                   mean_gx += gj * xh[j];
                               }
                               mean_g *= inv_d;
                               mean_gx *= inv_d;
                               for (std::size_t j = 0; j < d; ++j) {
                                   (*gx)[r * d + j] += inv_std[r] * (gy[j] * gv[j] - mean_g - xh[j] * mean_gx);
                               }
                           }
                       }
                   });
}

Var embedding(std::span<const int> ids, const Shape& ids_shape, const Var& table) {
    require_rank("embedding", table, 2);
    if (shape_numel(ids_shape) != ids.size()) {
        shape_error("embedding", "id count " + std::to_string(ids.size()) + " does not match shape " +
                                     shape_str(ids_shape));
    }
    const std::size_t vocab = table.dim(0);
    const std::size_t d = table.dim(1);
    Shape out_shape = ids_shape;
    out_shape.push_back(d);
    Tensor y(out_shape);
    std::vector<std::size_t> rows(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw std::out_of_range("embedding: token id " + std::to_string(ids[i]) +
                                    " outside vocabulary of size " + std::to_string(vocab));
        }
        rows[i] = static_cast<std::size_t>(ids[i]);
        for (std::size_t j = 0; j < d; ++j) y[i * d + j] = table.value()[rows[i] * d + j];
    }
    return make_op("embedding", std::move(y), {table}, [d, rows = std::move(rows)](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) (*g)[rows[i] * d + j] += self.grad[i * d + j];
        }
    });
}

void rope_rotate(std::span<double> v, double position, double base) {
    const std::size_t d = v.size();
    for (std::size_t i = 0; i + 1 < d; i += 2) {
        const double theta = position * std::pow(base, -static_cast<double>(i) / static_cast<double>(d));
        const double c = std::cos(theta), s = std::sin(theta);
        const double a = v[i], b = v[i + 1];
        v[i] = a * c - b * s;
        v[i + 1] = a * s + b * c;
    }
}

namespace {

// Rotates feature pairs (2i, 2i+1) of every row by the angles in the shared
// [S, d/2] tables.
Var rotate_pairs(const char* name, const Var& x, std::vector<double> cs, std::vector<double> sn) {
    const std::size_t n = x.dim(0), s = x.dim(1), d = x.dim(2), half = d / 2;
    Tensor y(x.shape());
    const Tensor& xv = x.value();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t t = 0; t < s; ++t) {
            const std::size_t base_off = (b * s + t) * d;
            for (std::size_t i = 0; i < half; ++i) {
                const double c = cs[t * half + i], sv = sn[t * half + i];
                const double a0 = xv[base_off + 2 * i], a1 = xv[base_off + 2 * i + 1];
                y[base_off + 2 * i] = a0 * c - a1 * sv;
                y[base_off + 2 * i + 1] = a0 * sv + a1 * c;
            }
        }
    }
    return make_op(name, std::move(y), {x},
                   [n, s, d, half, cs = std::move(cs), sn = std::move(sn)](Node& self) {
                       Tensor* g = input_grad(self, 0);
                       if (!g) return;
                       for (std::size_t b = 0; b < n; ++b) {
                           for (std::size_t t = 0; t < s; ++t) {
                               const std::size_t off = (b * s + t) * d;
                               for (std::size_t i = 0; i < half; ++i) {
                                   const double c = cs[t * half + i], sv = sn[t * half + i];
                                   const double g0 = self.grad[off + 2 * i], g1 = self.grad[off + 2 * i + 1];
                                   (*g)[off + 2 * i] += g0 * c + g1 * sv;
                                   (*g)[off + 2 * i + 1] += -g0 * sv + g1 * c;
                               }
                           }
                       }
                   });
}

}  // namespace

Var rope(const Var& x, std::span<const double> positions, double base) {
    require_rank("rope", x, 3);
    const std::size_t s = x.dim(1), d = x.dim(2);
    if (d % 2 != 0) shape_error("rope", "feature size must be even, got " + shape_str(x.shape()));
    if (positions.size() != s) {
        shape_error("rope", std::to_string(positions.size()) + " positions for sequence of " +
                                std::to_string(s));
    }
    const std::size_t half = d / 2;
    std::vector<double> cs(s * half), sn(s * half);
    for (std::size_t t = 0; t < s; ++t) {
        for (std::size_t i = 0; i < half; ++i) {
            const double theta =
                positions[t] * std::pow(base, -static_cast<double>(2 * i) / static_cast<double>(d));
            cs[t * half + i] = std::cos(theta);
            sn[t * half + i] = std::sin(theta);
        }
    }
    return rotate_pairs("rope", x, std::move(cs), std::move(sn));
}

Var rope_axial(const Var& x, std::span<const double> rows, std::span<const double> cols, double base) {
    require_rank("rope_axial", x, 3);
    const std::size_t s = x.dim(1), d = x.dim(2);
    if (d % 4 != 0) shape_error("rope_axial", "feature size must be a multiple of 4, got " + shape_str(x.shape()));
    if (rows.size() != s || cols.size() != s) {
        shape_error("rope_axial", std::to_string(rows.size()) + "/" + std::to_string(cols.size()) +
                                      " positions for sequence of " + std::to_string(s));
    }
    const std::size_t half = d / 2, quarter = d / 4;
    std::vector<double> cs(s * half), sn(s * half);
    for (std::size_t t = 0; t < s; ++t) {
        for (std::size_t i = 0; i < half; ++i) {
            const std::size_t j = i % quarter;
            const double pos = i < quarter ? rows[t] : cols[t];
            const double theta = pos * std::pow(base, -static_cast<double>(2 * j) / static_cast<double>(half));
            cs[t * half + i] = std::cos(theta);
            sn[t * half + i] = std::sin(theta);
        }
    }
    return rotate_pairs("rope_axial", x, std::move(cs), std::move(sn));
}

Var concat_seq(const Var& a, const Var& b) {
    require_rank("concat_seq", a, 3);
    require_rank("concat_seq", b, 3);
    const std::size_t nb = a.dim(0), sa = a.dim(1), sb = b.dim(1), d = a.dim(2);
    if (b.dim(0) != nb || b.dim(2) != d) {
        shape_error("concat_seq", "cannot join " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t so = sa + sb;
    Tensor y({nb, so, d});
    for (std::size_t i = 0; i < nb; ++i) {
        std::copy_n(a.value().data().data() + i * sa * d, sa * d, y.data().data() + i * so * d);
        std::copy_n(b.value().data().data() + i * sb * d, sb * d, y.data().data() + (i * so + sa) * d);
    }
    return make_op("concat_seq", std::move(y), {a, b}, [nb, sa, sb, so, d](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < nb; ++i)
                for (std::size_t j = 0; j < sa * d; ++j) (*g)[i * sa * d + j] += self.grad[i * so * d + j];
        }
        if (Tensor* g = input_grad(self, 1)) {
            for (std::size_t i = 0; i < nb; ++i)
                for (std::size_t j = 0; j < sb * d; ++j)
                    (*g)[i * sb * d + j] += self.grad[(i * so + sa) * d + j];
        }
    });
}

Var slice_seq(const Var& x, std::size_t start, std::size_t length) {
    require_rank("slice_seq", x, 3);
    const std::size_t nb = x.dim(0), s = x.dim(1), d = x.dim(2);
    if (start + length > s) {
        shape_error("slice_seq", "range [" + std::to_string(start) + ", " +
                                     std::to_string(start + length) + ") outside " + shape_str(x.shape()));
    }
    Tensor y({nb, length, d});
    for (std::size_t i = 0; i < nb; ++i) {
        std::copy_n(x.value().data().data() + (i * s + start) * d, length * d,
                    y.data().data() + i * length * d);
    }
    return make_op("slice_seq", std::move(y), {x}, [nb, s, d, start, length](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < nb; ++i)
                for (std::size_t j = 0; j < length * d; ++j)
                    (*g)[(i * s + start) * d + j] += self.grad[i * length * d + j];
        }
    });
}

Var split_heads(const Var& x, std::size_t heads) {
    require_rank("split_heads", x, 3);
    const std::size_t nb = x.dim(0), s = x.dim(1), dm = x.dim(2);
    if (heads == 0 || dm % heads != 0) {
        shape_error("split_heads", "width " + std::to_string(dm) + " not divisible by " +
                                       std::to_string(heads) + " heads");
    }
    const std::size_t hd = dm / heads;
    Tensor y({nb * heads, s, hd});
    const Tensor& xv = x.value();
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t t = 0; t < s; ++t)
            for (std::size_t h = 0; h < heads; ++h)
                std::copy_n(xv.data().data() + (b * s + t) * dm + h * hd, hd,
                            y.data().data() + ((b * heads + h) * s + t) * hd);
    return make_op("split_heads", std::move(y), {x}, [nb, s, dm, heads, hd](Node& self) {
        Tensor* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t t = 0; t < s; ++t)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t j = 0; j < hd; ++j)
                        (*g)[(b * s + t) * dm + h * hd + j] += self.grad[((b * heads + h) * s + t) * hd + j];
    });
}

Var merge_heads(const Var& x, std::size_t heads) {
    require_rank("merge_heads", x, 3);
    const std::size_t nh = x.dim(0), s = x.dim(1), hd = x.dim(2);
    if (heads == 0 || nh % heads != 0) {
        shape_error("merge_heads", "leading extent " + std::to_string(nh) + " not divisible by " +
                                       std::to_string(heads) + " heads");
    }
    const std::size_t nb = nh / heads, dm = heads * hd;
    Tensor y({nb, s, dm});
    const Tensor& xv = x.value();
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t t = 0; t < s; ++t)
            for (std::size_t h = 0; h < heads; ++h)
                std::copy_n(xv.data().data() + ((b * heads + h) * s + t) * hd, hd,
                            y.data().data() + (b * s + t) * dm + h * hd);
    return make_op("merge_heads", std::move(y), {x}, [nb, s, dm, heads, hd](Node& self) {
        Tensor* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t t = 0; t < s; ++t)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t j = 0; j < hd; ++j)
                        (*g)[((b * heads + h) * s + t) * hd + j] += self.grad[(b * s + t) * dm + h * hd + j];
    });
}

Var sum(const Var& x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return make_op("sum", Tensor::scalar(total), {x}, [](Node& self) {
        if (Tensor* g = input_grad(self, 0)) {
            for (double& v : g->data()) v += self.grad[0];
        }
    });
}

Var mean(const Var& x) {
    const std::size_t n = x.value().numel();
    if (n == 0) shape_error("mean", "empty input");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace air
