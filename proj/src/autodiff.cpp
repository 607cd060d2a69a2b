// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "bayesarch/kernels.hpp"

namespace bayesarch::ad {

const Tensor& Var::value() const {
    return tape_->value(index_);
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
    if (check_finite_ && !value.all_finite()) {
        throw NonFiniteError(std::string(op), fmt::format("{}: produced non-finite values (shape {})", op,
                                                          shape_str(value.shape())));
    }
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.parents.reserve(parents.size());
    for (const Var& p : parents) {
        if (p.tape_ != this) throw std::logic_error(fmt::format("{}: operand belongs to another tape", op));
        n.parents.push_back(p.index_);
        n.requires_grad = n.requires_grad || nodes_[p.index_].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_accumulator(std::size_t i) {
    Node& n = nodes_[i];
    if (!n.grad) n.grad.emplace(n.value.shape(), 0.0);
    return *n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw std::logic_error("backward: loss belongs to another tape");
    if (loss.value().size() != 1) {
        throw ShapeError(fmt::format("backward: loss must be scalar, got shape {}", shape_str(loss.shape())));
    }
    for (Node& n : nodes_) n.grad.reset();
    Node& root = nodes_[loss.index_];
    root.grad.emplace(root.value.shape(), 1.0);
    for (std::size_t i = loss.index_ + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.grad && n.backward) n.backward(*this, i);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.index_);
    if (!n.grad) return Tensor(n.value.shape(), 0.0);
    return *n.grad;
}

namespace {

enum class Bcast { same, scalar, trailing };

Bcast broadcast_mode(std::string_view op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (b.rank() == 0) return Bcast::scalar;
    if (a.rank() == b.rank() + 1 && std::equal(b.shape().begin(), b.shape().end(), a.shape().begin() + 1)) {
        return Bcast::trailing;
    }
    throw ShapeError(fmt::format("{}: incompatible shapes {} and {}", op, shape_str(a.shape()), shape_str(b.shape())));
}

template <class Fwd, class Bwd>
Var binary(std::string_view op, Var a, Var b, Fwd fwd, Bwd bwd) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    broadcast_mode(op, av, bv);
    const std::size_t nb = bv.size();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % nb]);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return a.tape().record(op, std::move(out), {a, b}, [ia, ib, bwd](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        const std::size_t nb2 = y.size();
        const bool need_a = t.requires_grad(ia);
        const bool need_b = t.requires_grad(ib);
        Tensor* ga = need_a ? &t.grad_accumulator(ia) : nullptr;
        Tensor* gb = need_b ? &t.grad_accumulator(ib) : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double da = 0.0;
            double db = 0.0;
            bwd(x[i], y[i % nb2], g[i], da, db);
            if (ga) (*ga)[i] += da;
            if (gb) (*gb)[i % nb2] += db;
        }
    });
}

// df(x, y) is the derivative of the output y = f(x) with respect to x.
template <class F, class DF>
Var unary(std::string_view op, Var a, F f, DF df) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const std::size_t ia = a.index();
    return a.tape().record(op, std::move(out), {a}, [ia, df](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

std::size_t last_dim(const Tensor& t) {
    return t.rank() == 0 ? 1 : t.shape().back();
}

}  // namespace

Var add(Var a, Var b) {
    return binary("add", a, b, [](double x, double y) { return x + y; },
                  [](double, double, double g, double& da, double& db) {
                      da = g;
                      db = g;
                  });
}

Var sub(Var a, Var b) {
    return binary("sub", a, b, [](double x, double y) { return x - y; },
                  [](double, double, double g, double& da, double& db) {
                      da = g;
                      db = -g;
                  });
}

Var mul(Var a, Var b) {
    return binary("mul", a, b, [](double x, double y) { return x * y; },
                  [](double x, double y, double g, double& da, double& db) {
                      da = g * y;
                      db = g * x;
                  });
}

Var div(Var a, Var b) {
    return binary("div", a, b, [](double x, double y) { return x / y; },
                  [](double x, double y, double g, double& da, double& db) {
                      da = g / y;
                      db = -g * x / (y * y);
                  });
}

Var neg(Var a) {
    return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Var a, double c) {
    return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var shift(Var a, double c) {
    return unary("shift", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
        throw ShapeError(fmt::format("matmul: incompatible shapes {} and {}", shape_str(av.shape()), shape_str(bv.shape())));
    }
    const std::size_t m = av.rows();
    const std::size_t k = av.cols();
    const std::size_t n = bv.cols();
    Tensor out(Shape{m, n});
    kernels::parallel::matmul(av.data(), bv.data(), out.data(), m, k, n);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        if (t.requires_grad(ia)) {
            kernels::parallel::matmul_a_bt(g.data(), t.value(ib).data(), t.grad_accumulator(ia).data(), m, k, n);
        }
        if (t.requires_grad(ib)) {
            kernels::parallel::matmul_at_b(t.value(ia).data(), g.data(), t.grad_accumulator(ib).data(), m, k, n);
        }
    });
}

Var relu(Var a) {
    return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
    return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
    return unary("log_sigmoid", a, [](double x) { return -stable_softplus(-x); },
                 [](double x, double) { return stable_sigmoid(-x); });
}

Var softplus(Var a) {
    return unary("softplus", a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax(Var a, double temperature) {
    const Tensor& av = a.value();
    const std::size_t d = last_dim(av);
    const std::size_t rows = av.size() / d;
    Tensor out(av.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data().data() + r * d;
        double* y = out.data().data() + r * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d; ++j) mx = std::max(mx, x[j] / temperature);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] / temperature - mx);
            s += y[j];
        }
        for (std::size_t j = 0; j < d; ++j) y[j] /= s;
    }
    const std::size_t ia = a.index();
    return a.tape().record("softmax", std::move(out), {a}, [ia, d, rows, temperature](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
            for (std::size_t j = 0; j < d; ++j) {
                ga[r * d + j] += y[r * d + j] * (g[r * d + j] - dot) / temperature;
            }
        }
    });
}

Var log_softmax(Var a, double temperature) {
    const Tensor& av = a.value();
    const std::size_t d = last_dim(av);
    const std::size_t rows = av.size() / d;
    Tensor out(av.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data().data() + r * d;
        double* y = out.data().data() + r * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d; ++j) mx = std::max(mx, x[j] / temperature);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += std::exp(x[j] / temperature - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < d; ++j) y[j] = x[j] / temperature - lse;
    }
    const std::size_t ia = a.index();
    return a.tape().record("log_softmax", std::move(out), {a}, [ia, d, rows, temperature](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < d; ++j) gsum += g[r * d + j];
            for (std::size_t j = 0; j < d; ++j) {
                ga[r * d + j] += (g[r * d + j] - std::exp(y[r * d + j]) * gsum) / temperature;
            }
        }
    });
}

Var logsumexp(Var a) {
    const Tensor& av = a.value();
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : av.data()) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : av.data()) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    const std::size_t ia = a.index();
    return a.tape().record("logsumexp", Tensor::scalar(lse), {a}, [ia](Tape& t, std::size_t self) {
        const double g = t.out_grad(self)[0];
        const double y = t.value(self)[0];
        const Tensor& x = t.value(ia);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * std::exp(x[i] - y);
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    const std::size_t ia = a.index();
    return a.tape().record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
        const double g = t.out_grad(self)[0];
        for (double& v : t.grad_accumulator(ia).data()) v += g;
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.size());
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    const std::size_t ia = a.index();
    return a.tape().record("mean", Tensor::scalar(s / n), {a}, [ia, n](Tape& t, std::size_t self) {
        const double g = t.out_grad(self)[0] / n;
        for (double& v : t.grad_accumulator(ia).data()) v += g;
    });
}

Var suffix_sum(Var a) {
    const Tensor& av = a.value();
    const std::size_t d = last_dim(av);
    const std::size_t rows = av.size() / d;
    Tensor out(av.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = d; j-- > 0;) {
            acc += av[r * d + j];
            out[r * d + j] = acc;
        }
    }
    const std::size_t ia = a.index();
    return a.tape().record("suffix_sum", std::move(out), {a}, [ia, d, rows](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                acc += g[r * d + j];
                ga[r * d + j] += acc;
            }
        }
    });
}

Var clamp(Var a, double lo, double hi) {
    return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var broadcast_to(Var scalar, const Shape& shape) {
    if (scalar.size() != 1) {
        throw ShapeError(fmt::format("broadcast_to: expected a scalar, got {}", shape_str(scalar.shape())));
    }
    const std::size_t ia = scalar.index();
    return scalar.tape().record("broadcast_to", Tensor(shape, scalar.item()), {scalar}, [ia](Tape& t, std::size_t self) {
        double s = 0.0;
        for (double g : t.out_grad(self).data()) s += g;
        t.grad_accumulator(ia)[0] += s;
    });
}

Var reshape(Var a, const Shape& shape) {
    Tensor out = a.value().reshaped(shape);
    const std::size_t ia = a.index();
    return a.tape().record("reshape", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var slice(Var a, std::size_t offset, const Shape& shape) {
    const std::size_t n = shape_numel(shape);
    if (offset + n > a.size()) {
        throw ShapeError(fmt::format("slice: range [{}, {}) exceeds {} elements", offset, offset + n, a.size()));
    }
    const auto src = a.value().data().subspan(offset, n);
    Tensor out(shape, std::vector<double>(src.begin(), src.end()));
    const std::size_t ia = a.index();
    return a.tape().record("slice", std::move(out), {a}, [ia, offset](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        Tensor& ga = t.grad_accumulator(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
    });
}

Var stack(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    const Shape& inner = parts.front().shape();
    Shape shape{parts.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    Tensor out(shape);
    const std::size_t n = shape_numel(inner);
    std::vector<std::size_t> idx;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (parts[p].shape() != inner) {
            throw ShapeError(fmt::format("stack: shape {} differs from {}", shape_str(parts[p].shape()), shape_str(inner)));
        }
        std::copy(parts[p].value().data().begin(), parts[p].value().data().end(), out.data().begin() + p * n);
        idx.push_back(parts[p].index());
    }
    return parts.front().tape().record("stack", std::move(out), std::span<const Var>(parts), [idx, n](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        for (std::size_t p = 0; p < idx.size(); ++p) {
            if (!t.requires_grad(idx[p])) continue;
            Tensor& gp = t.grad_accumulator(idx[p]);
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[p * n + i];
        }
    });
}

GradCheckResult grad_check(const std::function<Var(Var)>& f, const Tensor& point, double h) {
    GradCheckResult result;
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.leaf(point);
        Var y = f(x);
        tape.backward(y);
        analytic = tape.grad(x);
    }
    auto eval = [&](const Tensor& p, double& out) {
        try {
            Tape tape;
            out = f(tape.constant(p)).item();
            return std::isfinite(out);
        } catch (const NonFiniteError&) {
            return false;
        }
    };
    for (std::size_t i = 0; i < point.size(); ++i) {
        Tensor plus = point;
        Tensor minus = point;
        plus[i] += h;
        minus[i] -= h;
        double fp = 0.0;
        double fm = 0.0;
        if (!eval(plus, fp) || !eval(minus, fm)) {
            ++result.nan_count;
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        result.max_rel_error = std::max(result.max_rel_error, err);
    }
    return result;
}

}  // namespace bayesarch::ad
