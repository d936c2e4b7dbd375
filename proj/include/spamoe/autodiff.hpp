#pragma once

#include <cassert>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spamoe/common.hpp"
#include "spamoe/fft.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

/// Named dense f64 parameter tensors plus their gradient buffers. The store
/// is the single owner of every trainable value; tapes reference entries by
/// id and the optimizer walks the whole table.
struct ParamStore {
    struct Entry {
        std::string name;
        std::vector<int> dims;
        std::vector<double> value;
        std::vector<double> grad;
    };
    std::vector<Entry> entries;

    int add(std::string name, std::vector<int> dims, std::vector<double> value) {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        if (value.size() != n) throw InvalidInput("ParamStore::add: value size mismatch");
        entries.push_back({std::move(name), std::move(dims), std::move(value),
                           std::vector<double>(n, 0.0)});
        return static_cast<int>(entries.size()) - 1;
    }

    int add_zeros(std::string name, std::vector<int> dims) {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        return add(std::move(name), std::move(dims), std::vector<double>(n, 0.0));
    }

    Entry& at(int id) { return entries.at(static_cast<std::size_t>(id)); }
    const Entry& at(int id) const { return entries.at(static_cast<std::size_t>(id)); }

    void zero_grads() {
        for (auto& e : entries) std::fill(e.grad.begin(), e.grad.end(), 0.0);
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.value.size();
        return n;
    }
};

namespace ad {

/// Dense tape value: real when im is empty, complex otherwise.
struct Value {
    std::vector<int> dims;
    std::vector<double> re;
    std::vector<double> im;

    bool is_complex() const { return !im.empty(); }
    std::size_t numel() const { return re.size(); }

    static Value zeros_like(const Value& v) {
        Value z;
        z.dims = v.dims;
        z.re.assign(v.re.size(), 0.0);
        if (v.is_complex()) z.im.assign(v.im.size(), 0.0);
        return z;
    }

    static Value real(std::vector<int> dims, std::vector<double> data) {
        Value v;
        v.dims = std::move(dims);
        v.re = std::move(data);
        return v;
    }

    static Value scalar(double x) { return real({1}, {x}); }
};

class Tape;
using BackFn = std::function<void(Tape&)>;

struct Node {
    Value val;
    Value grad;
    bool has_grad = false;
    int param_id = -1;
    BackFn back;
};

/// Wengert list. Nodes are appended during the forward pass; backward walks
/// them once in reverse and then marks the tape consumed.
class Tape {
  public:
    std::vector<Node> nodes;
    std::vector<std::pair<int, int>> param_nodes;  // (param id, node id)
    bool consumed = false;

    int push(Value v, BackFn back = nullptr, int param_id = -1) {
        nodes.push_back(Node{std::move(v), Value{}, false, param_id, std::move(back)});
        int id = static_cast<int>(nodes.size()) - 1;
        if (param_id >= 0) param_nodes.emplace_back(param_id, id);
        return id;
    }

    const Value& val(int id) const { return nodes[static_cast<std::size_t>(id)].val; }

    Value& grad(int id) {
        Node& n = nodes[static_cast<std::size_t>(id)];
        if (!n.has_grad) {
            n.grad = Value::zeros_like(n.val);
            n.has_grad = true;
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes[static_cast<std::size_t>(id)].has_grad; }

    double scalar(int id) const {
        const Value& v = val(id);
        if (v.numel() != 1 || v.is_complex()) throw InvalidInput("Tape::scalar: not a real scalar");
        return v.re[0];
    }

    /// Reverse sweep from a real scalar root. Accumulated parameter
    /// gradients are added into the store.
    void backward(int root, ParamStore& store) {
        if (consumed) throw InvalidState("Tape::backward: tape already consumed");
        consumed = true;
        const Value& r = val(root);
        if (r.numel() != 1 || r.is_complex())
            throw InvalidInput("Tape::backward: root must be a real scalar");
        grad(root).re[0] = 1.0;
        for (int id = root; id >= 0; --id) {
            Node& n = nodes[static_cast<std::size_t>(id)];
            if (!n.has_grad || !n.back) continue;
            n.back(*this);
        }
        for (auto [pid, nid] : param_nodes) {
            Node& n = nodes[static_cast<std::size_t>(nid)];
            if (!n.has_grad) continue;
            auto& g = store.at(pid).grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad.re[i];
        }
    }
};

// ---- leaves ----

inline int constant(Tape& t, Value v) { return t.push(std::move(v)); }

inline int input_field(Tape& t, const Field2D& f) {
    return t.push(Value::real({f.h, f.w}, f.v));
}

inline int input_latent(Tape& t, const LatentTensor& z) {
    return t.push(Value::real({z.c, z.h, z.w}, z.v));
}

inline int param(Tape& t, const ParamStore& store, int pid) {
    const auto& e = store.at(pid);
    return t.push(Value::real(e.dims, e.value), nullptr, pid);
}

// ---- elementwise real ----

inline int add(Tape& t, int a, int b) {
    const Value& va = t.val(a);
    const Value& vb = t.val(b);
    if (va.dims != vb.dims || va.is_complex() || vb.is_complex())
        throw InvalidInput("ad::add: operand mismatch");
    Value out = va;
    for (std::size_t i = 0; i < out.re.size(); ++i) out.re[i] += vb.re[i];
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, b, id](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        Value& gb = tp.grad(b);
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            ga.re[i] += g.re[i];
            gb.re[i] += g.re[i];
        }
    };
    return id;
}

inline int sub(Tape& t, int a, int b) {
    const Value& va = t.val(a);
    const Value& vb = t.val(b);
    if (va.dims != vb.dims || va.is_complex() || vb.is_complex())
        throw InvalidInput("ad::sub: operand mismatch");
    Value out = va;
    for (std::size_t i = 0; i < out.re.size(); ++i) out.re[i] -= vb.re[i];
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, b, id](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        Value& gb = tp.grad(b);
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            ga.re[i] += g.re[i];
            gb.re[i] -= g.re[i];
        }
    };
    return id;
}

inline int scale(Tape& t, int a, double s) {
    Value out = t.val(a);
    if (out.is_complex()) throw InvalidInput("ad::scale: real only");
    for (double& x : out.re) x *= s;
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, s, id](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.re.size(); ++i) ga.re[i] += s * g.re[i];
    };
    return id;
}

inline int hadamard(Tape& t, int a, int b) {
    const Value& va = t.val(a);
    const Value& vb = t.val(b);
    if (va.dims != vb.dims || va.is_complex() || vb.is_complex())
        throw InvalidInput("ad::hadamard: operand mismatch");
    Value out = va;
    for (std::size_t i = 0; i < out.re.size(); ++i) out.re[i] *= vb.re[i];
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, b, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& va2 = tp.val(a);
        const Value& vb2 = tp.val(b);
        Value& ga = tp.grad(a);
        Value& gb = tp.grad(b);
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            ga.re[i] += vb2.re[i] * g.re[i];
            gb.re[i] += va2.re[i] * g.re[i];
        }
    };
    return id;
}

inline int silu(Tape& t, int a) {
    const Value& va = t.val(a);
    if (va.is_complex()) throw InvalidInput("ad::silu: real only");
    Value out = va;
    for (double& x : out.re) x = x / (1.0 + std::exp(-x));
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& x = tp.val(a);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-x.re[i]));
            ga.re[i] += g.re[i] * s * (1.0 + x.re[i] * (1.0 - s));
        }
    };
    return id;
}

inline int abs_val(Tape& t, int a) {
    Value out = t.val(a);
    if (out.is_complex()) throw InvalidInput("ad::abs_val: real only");
    for (double& x : out.re) x = std::abs(x);
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& x = tp.val(a);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            double s = x.re[i] > 0 ? 1.0 : (x.re[i] < 0 ? -1.0 : 0.0);  // sign(0) = 0
            ga.re[i] += s * g.re[i];
        }
    };
    return id;
}

inline int square(Tape& t, int a) {
    Value out = t.val(a);
    if (out.is_complex()) throw InvalidInput("ad::square: real only");
    for (double& x : out.re) x = x * x;
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& x = tp.val(a);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.re.size(); ++i) ga.re[i] += 2.0 * x.re[i] * g.re[i];
    };
    return id;
}

inline int logistic_op(Tape& t, int a) {
    Value out = t.val(a);
    if (out.is_complex()) throw InvalidInput("ad::logistic: real only");
    for (double& x : out.re) x = 1.0 / (1.0 + std::exp(-x));
    int id = t.push(std::move(out));
    t.nodes.back().back = [id, a](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& y = tp.val(id);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.re.size(); ++i)
            ga.re[i] += g.re[i] * y.re[i] * (1.0 - y.re[i]);
    };
    return id;
}

// ---- reductions & reshapes ----

inline int mean_all(Tape& t, int a) {
    const Value& v = t.val(a);
    if (v.is_complex()) throw InvalidInput("ad::mean_all: real only");
    std::size_t n = v.numel();
    double m = std::accumulate(v.re.begin(), v.re.end(), 0.0) / static_cast<double>(n);
    int id = t.push(Value::scalar(m));
    t.nodes.back().back = [a, id, n](Tape& tp) {
        double g = tp.grad(id).re[0] / static_cast<double>(n);
        Value& ga = tp.grad(a);
        for (double& x : ga.re) x += g;
    };
    return id;
}

inline int reshape(Tape& t, int a, std::vector<int> dims) {
    const Value& v = t.val(a);
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    if (n != v.numel() || v.is_complex()) throw InvalidInput("ad::reshape: numel mismatch");
    Value out = v;
    out.dims = std::move(dims);
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.re.size(); ++i) ga.re[i] += g.re[i];
    };
    return id;
}

inline int mean_cols(Tape& t, int a) {
    const Value& v = t.val(a);
    if (v.dims.size() != 2 || v.is_complex()) throw InvalidInput("ad::mean_cols: need a real matrix");
    int m = v.dims[0], n = v.dims[1];
    Value out = Value::real({m}, std::vector<double>(m, 0.0));
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += v.re[static_cast<std::size_t>(i) * n + j];
        out.re[i] = s / n;
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id, m, n](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        for (int i = 0; i < m; ++i) {
            double gi = g.re[i] / n;
            for (int j = 0; j < n; ++j) ga.re[static_cast<std::size_t>(i) * n + j] += gi;
        }
    };
    return id;
}

inline int channel_mean(Tape& t, int a) {
    const Value& v = t.val(a);
    if (v.dims.size() != 3 || v.is_complex())
        throw InvalidInput("ad::channel_mean: need a real CxHxW tensor");
    int c = v.dims[0], h = v.dims[1], w = v.dims[2];
    std::size_t plane = static_cast<std::size_t>(h) * w;
    Value out = Value::real({h, w}, std::vector<double>(plane, 0.0));
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) out.re[i] += v.re[ch * plane + i];
    for (double& x : out.re) x /= c;
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id, c, plane](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < plane; ++i) ga.re[ch * plane + i] += g.re[i] / c;
    };
    return id;
}

// ---- vector ops for gating ----

inline int gather_vec(Tape& t, int a, std::vector<int> idx) {
    const Value& v = t.val(a);
    if (v.dims.size() != 1 || v.is_complex()) throw InvalidInput("ad::gather_vec: need a real vector");
    Value out = Value::real({static_cast<int>(idx.size())}, {});
    out.re.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out.re[i] = v.re[static_cast<std::size_t>(idx[i])];
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id, idx](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < idx.size(); ++i)
            ga.re[static_cast<std::size_t>(idx[i])] += g.re[i];
    };
    return id;
}

inline int scatter_vec(Tape& t, int a, std::vector<int> idx, int n) {
    const Value& v = t.val(a);
    if (v.dims.size() != 1 || v.is_complex() || v.numel() != idx.size())
        throw InvalidInput("ad::scatter_vec: operand mismatch");
    Value out = Value::real({n}, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < idx.size(); ++i) out.re[static_cast<std::size_t>(idx[i])] = v.re[i];
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id, idx](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& ga = tp.grad(a);
        for (std::size_t i = 0; i < idx.size(); ++i)
            ga.re[i] += g.re[static_cast<std::size_t>(idx[i])];
    };
    return id;
}

inline int softmax_vec(Tape& t, int a) {
    const Value& v = t.val(a);
    if (v.dims.size() != 1 || v.is_complex()) throw InvalidInput("ad::softmax_vec: need a real vector");
    Value out = v;
    double mx = *std::max_element(out.re.begin(), out.re.end());
    double sum = 0.0;
    for (double& x : out.re) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : out.re) x /= sum;
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& p = tp.val(id);
        Value& ga = tp.grad(a);
        double dot = 0.0;
        for (std::size_t i = 0; i < g.re.size(); ++i) dot += g.re[i] * p.re[i];
        for (std::size_t i = 0; i < g.re.size(); ++i) ga.re[i] += p.re[i] * (g.re[i] - dot);
    };
    return id;
}

inline int softmax_rows(Tape& t, int a) {
    const Value& v = t.val(a);
    if (v.dims.size() != 2 || v.is_complex()) throw InvalidInput("ad::softmax_rows: need a real matrix");
    int m = v.dims[0], n = v.dims[1];
    Value out = v;
    for (int i = 0; i < m; ++i) {
        double* row = out.re.data() + static_cast<std::size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, id, m, n](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& p = tp.val(id);
        Value& ga = tp.grad(a);
        for (int i = 0; i < m; ++i) {
            const double* gr = g.re.data() + static_cast<std::size_t>(i) * n;
            const double* pr = p.re.data() + static_cast<std::size_t>(i) * n;
            double* gar = ga.re.data() + static_cast<std::size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += gr[j] * pr[j];
            for (int j = 0; j < n; ++j) gar[j] += pr[j] * (gr[j] - dot);
        }
    };
    return id;
}

inline int wsum(Tape& t, const std::vector<int>& ids, const std::vector<double>& weights) {
    if (ids.size() != weights.size() || ids.empty()) throw InvalidInput("ad::wsum: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) total += weights[i] * t.scalar(ids[i]);
    int id = t.push(Value::scalar(total));
    auto ids_c = ids;
    auto w_c = weights;
    t.nodes.back().back = [ids_c, w_c, id](Tape& tp) {
        double g = tp.grad(id).re[0];
        for (std::size_t i = 0; i < ids_c.size(); ++i) tp.grad(ids_c[i]).re[0] += w_c[i] * g;
    };
    return id;
}

inline int div_scalar(Tape& t, int a, int b) {
    double x = t.scalar(a), y = t.scalar(b);
    int id = t.push(Value::scalar(x / y));
    t.nodes.back().back = [a, b, id](Tape& tp) {
        double g = tp.grad(id).re[0];
        double x2 = tp.val(a).re[0], y2 = tp.val(b).re[0];
        tp.grad(a).re[0] += g / y2;
        tp.grad(b).re[0] -= g * x2 / (y2 * y2);
    };
    return id;
}

/// y = sum_k coeff[k] * x_k with both the coefficients and the tensors on
/// the tape. All tensors must share dims.
inline int lincomb(Tape& t, const std::vector<int>& xs, int coeffs) {
    const Value& c = t.val(coeffs);
    if (c.dims.size() != 1 || c.numel() != xs.size() || xs.empty())
        throw InvalidInput("ad::lincomb: coefficient count mismatch");
    const Value& first = t.val(xs[0]);
    Value out = Value::zeros_like(first);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Value& xk = t.val(xs[k]);
        if (xk.dims != first.dims || xk.is_complex()) throw InvalidInput("ad::lincomb: shape mismatch");
        double ck = c.re[k];
        for (std::size_t i = 0; i < out.re.size(); ++i) out.re[i] += ck * xk.re[i];
    }
    int id = t.push(std::move(out));
    auto xs_c = xs;
    t.nodes.back().back = [xs_c, coeffs, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& c2 = tp.val(coeffs);
        Value& gc = tp.grad(coeffs);
        for (std::size_t k = 0; k < xs_c.size(); ++k) {
            const Value& xk = tp.val(xs_c[k]);
            Value& gx = tp.grad(xs_c[k]);
            double ck = c2.re[k];
            double dot = 0.0;
            for (std::size_t i = 0; i < g.re.size(); ++i) {
                gx.re[i] += ck * g.re[i];
                dot += xk.re[i] * g.re[i];
            }
            gc.re[k] += dot;
        }
    };
    return id;
}

// ---- linear algebra ----

namespace mm {
inline double get(const Value& v, int r, int c, int rows, int cols, bool trans) {
    (void)rows;
    return trans ? v.re[static_cast<std::size_t>(c) * cols + r]
                 : v.re[static_cast<std::size_t>(r) * cols + c];
}
}  // namespace mm

/// C = op(A) * op(B); op transposes when the flag is set. Dims refer to the
/// stored (untransposed) matrices.
inline int matmul(Tape& t, int a, int b, bool trans_a = false, bool trans_b = false) {
    const Value& va = t.val(a);
    const Value& vb = t.val(b);
    if (va.dims.size() != 2 || vb.dims.size() != 2 || va.is_complex() || vb.is_complex())
        throw InvalidInput("ad::matmul: need real matrices");
    int am = va.dims[0], an = va.dims[1];
    int bm = vb.dims[0], bn = vb.dims[1];
    int m = trans_a ? an : am;
    int k = trans_a ? am : an;
    int k2 = trans_b ? bn : bm;
    int n = trans_b ? bm : bn;
    if (k != k2) throw InvalidInput("ad::matmul: inner dims mismatch");

    auto dense = [&](const Value& v, bool tr, int rows, int cols) {
        // Materialize op(v) row-major so the inner loops stay contiguous.
        std::vector<double> d(static_cast<std::size_t>(rows) * cols);
        if (!tr) {
            d = v.re;
        } else {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    d[static_cast<std::size_t>(i) * cols + j] =
                        v.re[static_cast<std::size_t>(j) * rows + i];
        }
        return d;
    };
    std::vector<double> A = dense(va, trans_a, m, k);
    std::vector<double> B = dense(vb, trans_b, k, n);
    Value out = Value::real({m, n}, std::vector<double>(static_cast<std::size_t>(m) * n, 0.0));
    for (int i = 0; i < m; ++i) {
        const double* arow = A.data() + static_cast<std::size_t>(i) * k;
        double* crow = out.re.data() + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = B.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [a, b, id, trans_a, trans_b, m, n, k](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& va2 = tp.val(a);
        const Value& vb2 = tp.val(b);
        Value& ga = tp.grad(a);
        Value& gb = tp.grad(b);
        // Materialize op(A) transposed and op(B) row-major so every inner
        // loop below runs over contiguous memory.
        std::vector<double> at(static_cast<std::size_t>(k) * m);   // op(A)^T
        std::vector<double> bd(static_cast<std::size_t>(k) * n);   // op(B)
        for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk)
                at[static_cast<std::size_t>(kk) * m + i] =
                    trans_a ? va2.re[static_cast<std::size_t>(kk) * m + i]
                            : va2.re[static_cast<std::size_t>(i) * k + kk];
        for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < n; ++j)
                bd[static_cast<std::size_t>(kk) * n + j] =
                    trans_b ? vb2.re[static_cast<std::size_t>(j) * k + kk]
                            : vb2.re[static_cast<std::size_t>(kk) * n + j];
        // dOp(A)[i,kk] = <G row i, op(B) row kk>
        std::vector<double> da(static_cast<std::size_t>(m) * k, 0.0);
        for (int i = 0; i < m; ++i) {
            const double* grow = g.re.data() + static_cast<std::size_t>(i) * n;
            double* darow = da.data() + static_cast<std::size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
                const double* brow = bd.data() + static_cast<std::size_t>(kk) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                darow[kk] = acc;
            }
        }
        // dOp(B) row kk += sum_i op(A)^T[kk,i] * G row i
        std::vector<double> db(static_cast<std::size_t>(k) * n, 0.0);
        for (int kk = 0; kk < k; ++kk) {
            const double* arow = at.data() + static_cast<std::size_t>(kk) * m;
            double* dbrow = db.data() + static_cast<std::size_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
                double av = arow[i];
                if (av == 0.0) continue;
                const double* grow = g.re.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
            }
        }
        for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
                double v = da[static_cast<std::size_t>(i) * k + kk];
                if (trans_a)
                    ga.re[static_cast<std::size_t>(kk) * m + i] += v;
                else
                    ga.re[static_cast<std::size_t>(i) * k + kk] += v;
            }
        for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < n; ++j) {
                double v = db[static_cast<std::size_t>(kk) * n + j];
                if (trans_b)
                    gb.re[static_cast<std::size_t>(j) * k + kk] += v;
                else
                    gb.re[static_cast<std::size_t>(kk) * n + j] += v;
            }
    };
    return id;
}

/// y[i][t] = x[i][t] + b[i]
inline int add_bias_rows(Tape& t, int x, int b) {
    const Value& vx = t.val(x);
    const Value& vb = t.val(b);
    if (vx.dims.size() != 2 || vb.dims.size() != 1 || vb.numel() != static_cast<std::size_t>(vx.dims[0]))
        throw InvalidInput("ad::add_bias_rows: operand mismatch");
    int m = vx.dims[0], n = vx.dims[1];
    Value out = vx;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.re[static_cast<std::size_t>(i) * n + j] += vb.re[i];
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, b, id, m, n](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        Value& gb = tp.grad(b);
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                double gv = g.re[static_cast<std::size_t>(i) * n + j];
                gx.re[static_cast<std::size_t>(i) * n + j] += gv;
                acc += gv;
            }
            gb.re[i] += acc;
        }
    };
    return id;
}

// ---- spatial ops ----

/// Zero-padded same-size convolution, stride 1, odd kernel.
/// x: [Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] or -1.
inline int conv2d(Tape& t, int x, int w, int b) {
    const Value& vx = t.val(x);
    const Value& vw = t.val(w);
    if (vx.dims.size() != 3 || vw.dims.size() != 4) throw InvalidInput("ad::conv2d: bad dims");
    int cin = vx.dims[0], h = vx.dims[1], wd = vx.dims[2];
    int cout = vw.dims[0], kh = vw.dims[2], kw = vw.dims[3];
    if (vw.dims[1] != cin) throw InvalidInput("ad::conv2d: channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw InvalidConfig("ad::conv2d: kernel sizes must be odd");
    if (kh > h || kw > wd) throw InvalidConfig("ad::conv2d: kernel larger than grid");
    int ph = kh / 2, pw = kw / 2;
    std::size_t plane = static_cast<std::size_t>(h) * wd;
    Value out = Value::real({cout, h, wd},
                            std::vector<double>(static_cast<std::size_t>(cout) * plane, 0.0));
    for (int f = 0; f < cout; ++f) {
        double* op = out.re.data() + static_cast<std::size_t>(f) * plane;
        for (int c = 0; c < cin; ++c) {
            const double* xp = vx.re.data() + static_cast<std::size_t>(c) * plane;
            const double* wp =
                vw.re.data() + (static_cast<std::size_t>(f) * cin + c) * kh * kw;
            for (int a = 0; a < kh; ++a) {
                for (int bb = 0; bb < kw; ++bb) {
                    double wv = wp[a * kw + bb];
                    if (wv == 0.0) continue;
                    int di = a - ph, dj = bb - pw;
                    int i0 = std::max(0, -di), i1 = std::min(h, h - di);
                    int j0 = std::max(0, -dj), j1 = std::min(wd, wd - dj);
                    for (int i = i0; i < i1; ++i) {
                        const double* xr = xp + static_cast<std::size_t>(i + di) * wd + dj;
                        double* orow = op + static_cast<std::size_t>(i) * wd;
                        for (int j = j0; j < j1; ++j) orow[j] += wv * xr[j];
                    }
                }
            }
        }
    }
    if (b >= 0) {
        const Value& vb = t.val(b);
        if (vb.numel() != static_cast<std::size_t>(cout))
            throw InvalidInput("ad::conv2d: bias size mismatch");
        for (int f = 0; f < cout; ++f) {
            double bv = vb.re[f];
            double* op = out.re.data() + static_cast<std::size_t>(f) * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] += bv;
        }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, w, b, id, cin, cout, h, wd, kh, kw, ph, pw, plane](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& vx2 = tp.val(x);
        const Value& vw2 = tp.val(w);
        Value& gx = tp.grad(x);
        Value& gw = tp.grad(w);
        for (int f = 0; f < cout; ++f) {
            const double* gp = g.re.data() + static_cast<std::size_t>(f) * plane;
            for (int c = 0; c < cin; ++c) {
                const double* xp = vx2.re.data() + static_cast<std::size_t>(c) * plane;
                const double* wp =
                    vw2.re.data() + (static_cast<std::size_t>(f) * cin + c) * kh * kw;
                double* gxp = gx.re.data() + static_cast<std::size_t>(c) * plane;
                double* gwp = gw.re.data() + (static_cast<std::size_t>(f) * cin + c) * kh * kw;
                for (int a = 0; a < kh; ++a) {
                    for (int bb = 0; bb < kw; ++bb) {
                        int di = a - ph, dj = bb - pw;
                        int i0 = std::max(0, -di), i1 = std::min(h, h - di);
                        int j0 = std::max(0, -dj), j1 = std::min(wd, wd - dj);
                        double wv = wp[a * kw + bb];
                        double acc = 0.0;
                        for (int i = i0; i < i1; ++i) {
                            const double* grow = gp + static_cast<std::size_t>(i) * wd;
                            const double* xrow = xp + static_cast<std::size_t>(i + di) * wd + dj;
                            double* gxrow = gxp + static_cast<std::size_t>(i + di) * wd + dj;
                            for (int j = j0; j < j1; ++j) {
                                acc += grow[j] * xrow[j];
                                gxrow[j] += wv * grow[j];
                            }
                        }
                        gwp[a * kw + bb] += acc;
                    }
                }
            }
        }
        if (b >= 0) {
            Value& gb = tp.grad(b);
            for (int f = 0; f < cout; ++f) {
                const double* gp = g.re.data() + static_cast<std::size_t>(f) * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                gb.re[f] += acc;
            }
        }
    };
    return id;
}

/// Non-overlapping patch embedding. x: [Cin,H,W] zero-padded on the bottom
/// and right to whole patches, w: [d, Cin*ph*pw], b: [d] or -1.
inline int patch_embed(Tape& t, int x, int w, int b, int ph, int pw) {
    const Value& vx = t.val(x);
    const Value& vw = t.val(w);
    if (vx.dims.size() != 3 || vw.dims.size() != 2) throw InvalidInput("ad::patch_embed: bad dims");
    int cin = vx.dims[0], h = vx.dims[1], wd = vx.dims[2];
    int d = vw.dims[0];
    if (vw.dims[1] != cin * ph * pw) throw InvalidConfig("ad::patch_embed: weight size mismatch");
    int th = (h + ph - 1) / ph, tw = (wd + pw - 1) / pw;
    std::size_t tplane = static_cast<std::size_t>(th) * tw;
    Value out = Value::real({d, th, tw}, std::vector<double>(static_cast<std::size_t>(d) * tplane, 0.0));
    for (int ti = 0; ti < th; ++ti) {
        for (int tj = 0; tj < tw; ++tj) {
            for (int dd = 0; dd < d; ++dd) {
                const double* wrow = vw.re.data() + static_cast<std::size_t>(dd) * cin * ph * pw;
                double acc = 0.0;
                for (int c = 0; c < cin; ++c)
                    for (int a = 0; a < ph; ++a) {
                        int i = ti * ph + a;
                        if (i >= h) continue;
                        for (int bb = 0; bb < pw; ++bb) {
                            int j = tj * pw + bb;
                            if (j >= wd) continue;
                            acc += wrow[(c * ph + a) * pw + bb] *
                                   vx.re[(static_cast<std::size_t>(c) * h + i) * wd + j];
                        }
                    }
                out.re[static_cast<std::size_t>(dd) * tplane + static_cast<std::size_t>(ti) * tw + tj] = acc;
            }
        }
    }
    if (b >= 0) {
        const Value& vb = t.val(b);
        for (int dd = 0; dd < d; ++dd) {
            double bv = vb.re[dd];
            double* op = out.re.data() + static_cast<std::size_t>(dd) * tplane;
            for (std::size_t i = 0; i < tplane; ++i) op[i] += bv;
        }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, w, b, id, cin, h, wd, d, ph, pw, th, tw, tplane](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& vx2 = tp.val(x);
        const Value& vw2 = tp.val(w);
        Value& gx = tp.grad(x);
        Value& gw = tp.grad(w);
        for (int ti = 0; ti < th; ++ti)
            for (int tj = 0; tj < tw; ++tj)
                for (int dd = 0; dd < d; ++dd) {
                    double gv = g.re[static_cast<std::size_t>(dd) * tplane +
                                     static_cast<std::size_t>(ti) * tw + tj];
                    if (gv == 0.0) continue;
                    const double* wrow = vw2.re.data() + static_cast<std::size_t>(dd) * cin * ph * pw;
                    double* gwrow = gw.re.data() + static_cast<std::size_t>(dd) * cin * ph * pw;
                    for (int c = 0; c < cin; ++c)
                        for (int a = 0; a < ph; ++a) {
                            int i = ti * ph + a;
                            if (i >= h) continue;
                            for (int bb = 0; bb < pw; ++bb) {
                                int j = tj * pw + bb;
                                if (j >= wd) continue;
                                std::size_t xi = (static_cast<std::size_t>(c) * h + i) * wd + j;
                                gx.re[xi] += gv * wrow[(c * ph + a) * pw + bb];
                                gwrow[(c * ph + a) * pw + bb] += gv * vx2.re[xi];
                            }
                        }
                }
        if (b >= 0) {
            Value& gb = tp.grad(b);
            for (int dd = 0; dd < d; ++dd) {
                const double* gp = g.re.data() + static_cast<std::size_t>(dd) * tplane;
                double acc = 0.0;
                for (std::size_t i = 0; i < tplane; ++i) acc += gp[i];
                gb.re[dd] += acc;
            }
        }
    };
    return id;
}

/// Non-overlapping transposed convolution: every token expands into an
/// sh x sw block. tok: [d,Th,Tw], w: [Cout,d,sh,sw], b: [Cout] or -1.
inline int deconv_patch(Tape& t, int tok, int w, int b) {
    const Value& vt = t.val(tok);
    const Value& vw = t.val(w);
    if (vt.dims.size() != 3 || vw.dims.size() != 4) throw InvalidInput("ad::deconv_patch: bad dims");
    int d = vt.dims[0], th = vt.dims[1], tw = vt.dims[2];
    int cout = vw.dims[0], sh = vw.dims[2], sw = vw.dims[3];
    if (vw.dims[1] != d) throw InvalidInput("ad::deconv_patch: channel mismatch");
    int h = th * sh, wd = tw * sw;
    std::size_t plane = static_cast<std::size_t>(h) * wd;
    std::size_t tplane = static_cast<std::size_t>(th) * tw;
    Value out = Value::real({cout, h, wd},
                            std::vector<double>(static_cast<std::size_t>(cout) * plane, 0.0));
    for (int f = 0; f < cout; ++f)
        for (int dd = 0; dd < d; ++dd) {
            const double* wp = vw.re.data() + (static_cast<std::size_t>(f) * d + dd) * sh * sw;
            const double* tp2 = vt.re.data() + static_cast<std::size_t>(dd) * tplane;
            double* op = out.re.data() + static_cast<std::size_t>(f) * plane;
            for (int ti = 0; ti < th; ++ti)
                for (int tj = 0; tj < tw; ++tj) {
                    double tv = tp2[static_cast<std::size_t>(ti) * tw + tj];
                    if (tv == 0.0) continue;
                    for (int a = 0; a < sh; ++a)
                        for (int bb = 0; bb < sw; ++bb)
                            op[static_cast<std::size_t>(ti * sh + a) * wd + tj * sw + bb] +=
                                tv * wp[a * sw + bb];
                }
        }
    if (b >= 0) {
        const Value& vb = t.val(b);
        for (int f = 0; f < cout; ++f) {
            double bv = vb.re[f];
            double* op = out.re.data() + static_cast<std::size_t>(f) * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] += bv;
        }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [tok, w, b, id, d, th, tw, cout, sh, sw, wd, plane, tplane](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& vt2 = tp.val(tok);
        const Value& vw2 = tp.val(w);
        Value& gt = tp.grad(tok);
        Value& gw = tp.grad(w);
        for (int f = 0; f < cout; ++f)
            for (int dd = 0; dd < d; ++dd) {
                const double* wp = vw2.re.data() + (static_cast<std::size_t>(f) * d + dd) * sh * sw;
                double* gwp = gw.re.data() + (static_cast<std::size_t>(f) * d + dd) * sh * sw;
                const double* gp = g.re.data() + static_cast<std::size_t>(f) * plane;
                for (int ti = 0; ti < th; ++ti)
                    for (int tj = 0; tj < tw; ++tj) {
                        double tv = vt2.re[static_cast<std::size_t>(dd) * tplane +
                                           static_cast<std::size_t>(ti) * tw + tj];
                        double acc = 0.0;
                        for (int a = 0; a < sh; ++a)
                            for (int bb = 0; bb < sw; ++bb) {
                                double gv = gp[static_cast<std::size_t>(ti * sh + a) * wd +
                                               tj * sw + bb];
                                acc += gv * wp[a * sw + bb];
                                gwp[a * sw + bb] += gv * tv;
                            }
                        gt.re[static_cast<std::size_t>(dd) * tplane +
                              static_cast<std::size_t>(ti) * tw + tj] += acc;
                    }
            }
        if (b >= 0) {
            Value& gb = tp.grad(b);
            for (int f = 0; f < cout; ++f) {
                const double* gp = g.re.data() + static_cast<std::size_t>(f) * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                gb.re[f] += acc;
            }
        }
    };
    return id;
}

namespace resize_detail {
struct Tap {
    int i0, i1;
    double f;  // weight of i1; (1-f) goes to i0
};

inline std::vector<Tap> corner_aligned(int src, int dst) {
    std::vector<Tap> taps(dst);
    for (int i = 0; i < dst; ++i) {
        double s = dst > 1 ? static_cast<double>(i) * (src - 1) / (dst - 1) : 0.0;
        int i0 = static_cast<int>(std::floor(s));
        if (i0 > src - 1) i0 = src - 1;
        int i1 = std::min(i0 + 1, src - 1);
        taps[i] = {i0, i1, s - i0};
    }
    return taps;
}
}  // namespace resize_detail

/// Corner-aligned bilinear resampling of each channel to (ho, wo).
inline int bilinear_resize(Tape& t, int x, int ho, int wo) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 3 || vx.is_complex()) throw InvalidInput("ad::bilinear_resize: bad dims");
    if (ho < 2 || wo < 2) throw InvalidInput("ad::bilinear_resize: target too small");
    int c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    auto rows = resize_detail::corner_aligned(h, ho);
    auto cols = resize_detail::corner_aligned(w, wo);
    std::size_t plane_in = static_cast<std::size_t>(h) * w;
    std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
    Value out = Value::real({c, ho, wo}, std::vector<double>(static_cast<std::size_t>(c) * plane_out, 0.0));
    for (int ch = 0; ch < c; ++ch) {
        const double* xp = vx.re.data() + static_cast<std::size_t>(ch) * plane_in;
        double* op = out.re.data() + static_cast<std::size_t>(ch) * plane_out;
        for (int i = 0; i < ho; ++i) {
            const auto& ri = rows[i];
            for (int j = 0; j < wo; ++j) {
                const auto& cj = cols[j];
                op[static_cast<std::size_t>(i) * wo + j] =
                    (1 - ri.f) * ((1 - cj.f) * xp[static_cast<std::size_t>(ri.i0) * w + cj.i0] +
                                  cj.f * xp[static_cast<std::size_t>(ri.i0) * w + cj.i1]) +
                    ri.f * ((1 - cj.f) * xp[static_cast<std::size_t>(ri.i1) * w + cj.i0] +
                            cj.f * xp[static_cast<std::size_t>(ri.i1) * w + cj.i1]);
            }
        }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, c, h, w, ho, wo, rows, cols, plane_in, plane_out](Tape& tp) {
        (void)h;
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        for (int ch = 0; ch < c; ++ch) {
            double* gxp = gx.re.data() + static_cast<std::size_t>(ch) * plane_in;
            const double* gp = g.re.data() + static_cast<std::size_t>(ch) * plane_out;
            for (int i = 0; i < ho; ++i) {
                const auto& ri = rows[i];
                for (int j = 0; j < wo; ++j) {
                    const auto& cj = cols[j];
                    double gv = gp[static_cast<std::size_t>(i) * wo + j];
                    gxp[static_cast<std::size_t>(ri.i0) * w + cj.i0] += (1 - ri.f) * (1 - cj.f) * gv;
                    gxp[static_cast<std::size_t>(ri.i0) * w + cj.i1] += (1 - ri.f) * cj.f * gv;
                    gxp[static_cast<std::size_t>(ri.i1) * w + cj.i0] += ri.f * (1 - cj.f) * gv;
                    gxp[static_cast<std::size_t>(ri.i1) * w + cj.i1] += ri.f * cj.f * gv;
                }
            }
        }
    };
    return id;
}

namespace resize_detail {
struct Span {
    int begin;
    std::vector<double> weights;  // normalized overlap fractions
};

inline std::vector<Span> area_spans(int src, int dst) {
    std::vector<Span> spans(dst);
    double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double lo = i * scale, hi = (i + 1) * scale;
        int a0 = static_cast<int>(std::floor(lo));
        int a1 = std::min(src, static_cast<int>(std::ceil(hi)));
        Span s;
        s.begin = a0;
        for (int a = a0; a < a1; ++a) {
            double ov = std::min(hi, static_cast<double>(a + 1)) - std::max(lo, static_cast<double>(a));
            s.weights.push_back(ov / scale);
        }
        spans[i] = s;
    }
    return spans;
}
}  // namespace resize_detail

/// Exact fractional-area average pooling of each channel down to (ho, wo).
inline int area_downsample(Tape& t, int x, int ho, int wo) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 3 || vx.is_complex()) throw InvalidInput("ad::area_downsample: bad dims");
    int c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    if (ho > h || wo > w || ho < 1 || wo < 1)
        throw InvalidInput("ad::area_downsample: target must not exceed source");
    auto rs = resize_detail::area_spans(h, ho);
    auto cs = resize_detail::area_spans(w, wo);
    std::size_t plane_in = static_cast<std::size_t>(h) * w;
    std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
    Value out = Value::real({c, ho, wo}, std::vector<double>(static_cast<std::size_t>(c) * plane_out, 0.0));
    for (int ch = 0; ch < c; ++ch) {
        const double* xp = vx.re.data() + static_cast<std::size_t>(ch) * plane_in;
        double* op = out.re.data() + static_cast<std::size_t>(ch) * plane_out;
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
                double acc = 0.0;
                for (std::size_t a = 0; a < rs[i].weights.size(); ++a)
                    for (std::size_t bb = 0; bb < cs[j].weights.size(); ++bb)
                        acc += rs[i].weights[a] * cs[j].weights[bb] *
                               xp[static_cast<std::size_t>(rs[i].begin + a) * w + cs[j].begin + bb];
                op[static_cast<std::size_t>(i) * wo + j] = acc;
            }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, c, w, ho, wo, rs, cs, plane_in, plane_out](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        for (int ch = 0; ch < c; ++ch) {
            double* gxp = gx.re.data() + static_cast<std::size_t>(ch) * plane_in;
            const double* gp = g.re.data() + static_cast<std::size_t>(ch) * plane_out;
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double gv = gp[static_cast<std::size_t>(i) * wo + j];
                    for (std::size_t a = 0; a < rs[i].weights.size(); ++a)
                        for (std::size_t bb = 0; bb < cs[j].weights.size(); ++bb)
                            gxp[static_cast<std::size_t>(rs[i].begin + a) * w + cs[j].begin + bb] +=
                                gv * rs[i].weights[a] * cs[j].weights[bb];
                }
        }
    };
    return id;
}

// ---- spectral ops ----
//
// Complex cotangent convention: for a complex value Y with cotangent zeta
// (stored as re/im pairs), the inner product is Re<zeta, dY>. The resulting
// adjoints: forward centered DFT of a real x pulls back as
// dx = Re(unnormalized inverse of zeta); the real inverse transform pulls
// back as dY = (1/N) * forward(g).

/// Centered forward transform of each channel: real [C,H,W] -> complex [C,H,W].
inline int dft2(Tape& t, int x) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 3 || vx.is_complex()) throw InvalidInput("ad::dft2: need real CxHxW");
    int c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    std::size_t plane = static_cast<std::size_t>(h) * w;
    Value out;
    out.dims = {c, h, w};
    out.re.resize(vx.re.size());
    out.im.resize(vx.re.size());
    std::vector<fftdetail::cplx> buf(plane);
    for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) buf[i] = vx.re[ch * plane + i];
        fftdetail::fft2_centered(buf, h, w);
        for (std::size_t i = 0; i < plane; ++i) {
            out.re[ch * plane + i] = buf[i].real();
            out.im[ch * plane + i] = buf[i].imag();
        }
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, c, h, w, plane](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        std::vector<fftdetail::cplx> buf(plane);
        double n = static_cast<double>(h) * w;
        for (int ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < plane; ++i)
                buf[i] = fftdetail::cplx(g.re[ch * plane + i], g.im[ch * plane + i]);
            fftdetail::ifft2_centered(buf, h, w);
            for (std::size_t i = 0; i < plane; ++i) gx.re[ch * plane + i] += n * buf[i].real();
        }
    };
    return id;
}

/// Real part of the centered inverse transform of each channel.
inline int idft2_real(Tape& t, int x) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 3 || !vx.is_complex()) throw InvalidInput("ad::idft2_real: need complex CxHxW");
    int c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    std::size_t plane = static_cast<std::size_t>(h) * w;
    Value out = Value::real({c, h, w}, std::vector<double>(vx.re.size(), 0.0));
    std::vector<fftdetail::cplx> buf(plane);
    for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i)
            buf[i] = fftdetail::cplx(vx.re[ch * plane + i], vx.im[ch * plane + i]);
        fftdetail::ifft2_centered(buf, h, w);
        for (std::size_t i = 0; i < plane; ++i) out.re[ch * plane + i] = buf[i].real();
    }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, c, h, w, plane](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        std::vector<fftdetail::cplx> buf(plane);
        double inv_n = 1.0 / (static_cast<double>(h) * w);
        for (int ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < plane; ++i) buf[i] = g.re[ch * plane + i];
            fftdetail::fft2_centered(buf, h, w);
            for (std::size_t i = 0; i < plane; ++i) {
                gx.re[ch * plane + i] += inv_n * buf[i].real();
                gx.im[ch * plane + i] += inv_n * buf[i].imag();
            }
        }
    };
    return id;
}

/// Multiplies every channel of a complex spectrum by a fixed real mask.
inline int cmask(Tape& t, int x, const Field2D& mask) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 3 || !vx.is_complex()) throw InvalidInput("ad::cmask: need complex CxHxW");
    int c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    if (mask.h != h || mask.w != w) throw InvalidInput("ad::cmask: mask shape mismatch");
    std::size_t plane = static_cast<std::size_t>(h) * w;
    Value out = vx;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) {
            out.re[ch * plane + i] *= mask.v[i];
            out.im[ch * plane + i] *= mask.v[i];
        }
    int id = t.push(std::move(out));
    std::vector<double> m = mask.v;
    t.nodes.back().back = [x, id, c, plane, m](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < plane; ++i) {
                gx.re[ch * plane + i] += m[i] * g.re[ch * plane + i];
                gx.im[ch * plane + i] += m[i] * g.im[ch * plane + i];
            }
    };
    return id;
}

/// Mode-truncated complex channel mixing: Y[f](bin) = sum_c W[f,c](bin) X[c](bin)
/// on the retained bins, zero elsewhere. Weights come as separate real and
/// imaginary parameter tensors of dims [Cout, Cin, nbins].
inline int fno_mul(Tape& t, int x, int w_re, int w_im, std::vector<int> bins, int cout) {
    const Value& vx = t.val(x);
    const Value& wr = t.val(w_re);
    const Value& wi = t.val(w_im);
    if (vx.dims.size() != 3 || !vx.is_complex()) throw InvalidInput("ad::fno_mul: need complex CxHxW");
    int cin = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    std::size_t nb = bins.size();
    if (wr.dims != std::vector<int>{cout, cin, static_cast<int>(nb)} || wi.dims != wr.dims)
        throw InvalidInput("ad::fno_mul: weight dims mismatch");
    std::size_t plane = static_cast<std::size_t>(h) * w;
    Value out;
    out.dims = {cout, h, w};
    out.re.assign(static_cast<std::size_t>(cout) * plane, 0.0);
    out.im.assign(static_cast<std::size_t>(cout) * plane, 0.0);
    for (int f = 0; f < cout; ++f)
        for (int c = 0; c < cin; ++c) {
            const double* wrp = wr.re.data() + (static_cast<std::size_t>(f) * cin + c) * nb;
            const double* wip = wi.re.data() + (static_cast<std::size_t>(f) * cin + c) * nb;
            for (std::size_t bi = 0; bi < nb; ++bi) {
                std::size_t p = static_cast<std::size_t>(bins[bi]);
                double xr = vx.re[c * plane + p], xi = vx.im[c * plane + p];
                out.re[f * plane + p] += wrp[bi] * xr - wip[bi] * xi;
                out.im[f * plane + p] += wrp[bi] * xi + wip[bi] * xr;
            }
        }
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, w_re, w_im, id, bins, cout, plane](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& vx2 = tp.val(x);
        const Value& wr2 = tp.val(w_re);
        const Value& wi2 = tp.val(w_im);
        Value& gx = tp.grad(x);
        Value& gwr = tp.grad(w_re);
        Value& gwi = tp.grad(w_im);
        int cin = vx2.dims[0];
        std::size_t nb = bins.size();
        for (int f = 0; f < cout; ++f)
            for (int c = 0; c < cin; ++c) {
                const double* wrp = wr2.re.data() + (static_cast<std::size_t>(f) * cin + c) * nb;
                const double* wip = wi2.re.data() + (static_cast<std::size_t>(f) * cin + c) * nb;
                double* gwrp = gwr.re.data() + (static_cast<std::size_t>(f) * cin + c) * nb;
                double* gwip = gwi.re.data() + (static_cast<std::size_t>(f) * cin + c) * nb;
                for (std::size_t bi = 0; bi < nb; ++bi) {
                    std::size_t p = static_cast<std::size_t>(bins[bi]);
                    double zr = g.re[f * plane + p], zi = g.im[f * plane + p];
                    double xr = vx2.re[c * plane + p], xi = vx2.im[c * plane + p];
                    // dX += conj(W) * zeta
                    gx.re[c * plane + p] += wrp[bi] * zr + wip[bi] * zi;
                    gx.im[c * plane + p] += wrp[bi] * zi - wip[bi] * zr;
                    // dW = zeta * conj(X): re -> w_re grad, im -> w_im grad
                    gwrp[bi] += zr * xr + zi * xi;
                    gwip[bi] += zi * xr - zr * xi;
                }
            }
    };
    return id;
}

/// A = sqrt(mean over channels of |X_c|^2), per frequency bin.
/// Subgradient 0 where A = 0.
inline int energy_map_op(Tape& t, int x) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 3 || !vx.is_complex())
        throw InvalidInput("ad::energy_map: need complex CxHxW");
    int c = vx.dims[0], h = vx.dims[1], w = vx.dims[2];
    std::size_t plane = static_cast<std::size_t>(h) * w;
    Value out = Value::real({h, w}, std::vector<double>(plane, 0.0));
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            out.re[i] += vx.re[ch * plane + i] * vx.re[ch * plane + i] +
                         vx.im[ch * plane + i] * vx.im[ch * plane + i];
    for (double& e : out.re) e = std::sqrt(e / c);
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, c, plane](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& a = tp.val(id);
        const Value& vx2 = tp.val(x);
        Value& gx = tp.grad(x);
        for (std::size_t i = 0; i < plane; ++i) {
            if (a.re[i] == 0.0) continue;
            double scale = g.re[i] / (c * a.re[i]);
            for (int ch = 0; ch < c; ++ch) {
                gx.re[ch * plane + i] += scale * vx2.re[ch * plane + i];
                gx.im[ch * plane + i] += scale * vx2.im[ch * plane + i];
            }
        }
    };
    return id;
}

/// Elementwise complex magnitude, subgradient 0 at the origin.
inline int magnitude(Tape& t, int x) {
    const Value& vx = t.val(x);
    if (!vx.is_complex()) throw InvalidInput("ad::magnitude: need a complex value");
    Value out = Value::real(vx.dims, std::vector<double>(vx.numel(), 0.0));
    for (std::size_t i = 0; i < vx.numel(); ++i)
        out.re[i] = std::hypot(vx.re[i], vx.im[i]);
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& m = tp.val(id);
        const Value& vx2 = tp.val(x);
        Value& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            if (m.re[i] == 0.0) continue;
            gx.re[i] += g.re[i] * vx2.re[i] / m.re[i];
            gx.im[i] += g.re[i] * vx2.im[i] / m.re[i];
        }
    };
    return id;
}

// ---- finite-difference loss building blocks ----

inline int diff_rows(Tape& t, int x) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 2 || vx.is_complex()) throw InvalidInput("ad::diff_rows: need a real matrix");
    int h = vx.dims[0], w = vx.dims[1];
    Value out = Value::real({h - 1, w}, std::vector<double>(static_cast<std::size_t>(h - 1) * w, 0.0));
    for (int i = 0; i + 1 < h; ++i)
        for (int j = 0; j < w; ++j)
            out.re[static_cast<std::size_t>(i) * w + j] =
                vx.re[static_cast<std::size_t>(i + 1) * w + j] - vx.re[static_cast<std::size_t>(i) * w + j];
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, h, w](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        for (int i = 0; i + 1 < h; ++i)
            for (int j = 0; j < w; ++j) {
                double gv = g.re[static_cast<std::size_t>(i) * w + j];
                gx.re[static_cast<std::size_t>(i + 1) * w + j] += gv;
                gx.re[static_cast<std::size_t>(i) * w + j] -= gv;
            }
    };
    return id;
}

inline int diff_cols(Tape& t, int x) {
    const Value& vx = t.val(x);
    if (vx.dims.size() != 2 || vx.is_complex()) throw InvalidInput("ad::diff_cols: need a real matrix");
    int h = vx.dims[0], w = vx.dims[1];
    Value out = Value::real({h, w - 1}, std::vector<double>(static_cast<std::size_t>(h) * (w - 1), 0.0));
    for (int i = 0; i < h; ++i)
        for (int j = 0; j + 1 < w; ++j)
            out.re[static_cast<std::size_t>(i) * (w - 1) + j] =
                vx.re[static_cast<std::size_t>(i) * w + j + 1] - vx.re[static_cast<std::size_t>(i) * w + j];
    int id = t.push(std::move(out));
    t.nodes.back().back = [x, id, h, w](Tape& tp) {
        const Value& g = tp.grad(id);
        Value& gx = tp.grad(x);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j + 1 < w; ++j) {
                double gv = g.re[static_cast<std::size_t>(i) * (w - 1) + j];
                gx.re[static_cast<std::size_t>(i) * w + j + 1] += gv;
                gx.re[static_cast<std::size_t>(i) * w + j] -= gv;
            }
    };
    return id;
}

/// Affinity scores s[e,k] = -sharpness * (f[e] - centers[k])^2.
inline int affinity_scores(Tape& t, int f, std::vector<double> centers, double sharpness) {
    const Value& vf = t.val(f);
    if (vf.dims.size() != 1 || vf.is_complex()) throw InvalidInput("ad::affinity_scores: need a vector");
    int ne = static_cast<int>(vf.numel());
    int k = static_cast<int>(centers.size());
    Value out = Value::real({ne, k}, std::vector<double>(static_cast<std::size_t>(ne) * k, 0.0));
    for (int e = 0; e < ne; ++e)
        for (int b = 0; b < k; ++b) {
            double d = vf.re[e] - centers[b];
            out.re[static_cast<std::size_t>(e) * k + b] = -sharpness * d * d;
        }
    int id = t.push(std::move(out));
    t.nodes.back().back = [f, id, centers, sharpness, ne, k](Tape& tp) {
        const Value& g = tp.grad(id);
        const Value& vf2 = tp.val(f);
        Value& gf = tp.grad(f);
        for (int e = 0; e < ne; ++e) {
            double acc = 0.0;
            for (int b = 0; b < k; ++b)
                acc += g.re[static_cast<std::size_t>(e) * k + b] *
                       (-2.0 * sharpness * (vf2.re[e] - centers[b]));
            gf.re[e] += acc;
        }
    };
    return id;
}

// ---- extraction helpers ----

inline Field2D to_field(const Value& v) {
    if (v.dims.size() == 2) {
        Field2D f(v.dims[0], v.dims[1]);
        f.v = v.re;
        return f;
    }
    if (v.dims.size() == 3 && v.dims[0] == 1) {
        Field2D f(v.dims[1], v.dims[2]);
        f.v = v.re;
        return f;
    }
    throw InvalidInput("to_field: value is not a single plane");
}

inline LatentTensor to_latent(const Value& v) {
    if (v.dims.size() != 3) throw InvalidInput("to_latent: need CxHxW");
    LatentTensor z(v.dims[0], v.dims[1], v.dims[2]);
    z.v = v.re;
    return z;
}

}  // namespace ad
}  // namespace spamoe
