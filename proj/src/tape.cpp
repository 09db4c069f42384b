#include "cet/tape.hpp"

#include <algorithm>
#include <cmath>

namespace cet {

namespace {

constexpr real kLayerNormEps = real(1e-5);

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + t.shape_str());
}

} // namespace

Tensor& Tape::gbuf(Id id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.val);
    return n.grad;
}

Tensor Tape::grad(Id id) const {
    const Node& n = node(id);
    return n.grad.empty() ? Tensor::zeros_like(n.val) : n.grad;
}

void Tape::backward(Id top) {
    Node& t = node(top);
    if (t.val.size() != 1)
        throw ShapeError("backward: loss must be a scalar, got " + t.val.shape_str());
    gbuf(top).fill(1);
    for (Id i = top; i >= 0; --i) {
        Node& n = node(i);
        if (n.back && !n.grad.empty()) n.back();
    }
}

Tape::Id Tape::input(Tensor v) { return push(std::move(v)); }

Tape::Id Tape::param(Param& p) {
    Id id = push(p.value);
    if (recording_) {
        Param* pp = &p;
        node(id).back = [this, id, pp] { add_into(pp->grad, node(id).grad); };
    }
    return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out;
    mm_nn(A, B, out);
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, b] {
            const Tensor& G = node(id).grad;
            mm_nt(G, val(b), gbuf(a), true);
            mm_tn(val(a), G, gbuf(b), true);
        };
    return id;
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out;
    mm_nt(A, B, out);
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, b] {
            const Tensor& G = node(id).grad;
            mm_nn(G, val(b), gbuf(a), true);
            mm_tn(G, val(a), gbuf(b), true);
        };
    return id;
}

namespace {
enum class Bin { Add, Sub, Mul };
}

// add/sub/mul share the broadcast rule: either equal shapes, or the second
// operand is rank-1 with length = cols(a), broadcast over the rows of a.
Tape::Id Tape::add(Id a, Id b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    const bool bcast = !A.same_shape(B);
    if (bcast && !(B.rank() == 1 && A.rank() == 2 && B.size() == A.cols()))
        throw ShapeError("add: shape " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    if (bcast) {
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) += B[c];
    } else {
        add_into(out, B);
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, b, bcast] {
            const Tensor& G = node(id).grad;
            add_into(gbuf(a), G);
            Tensor& gb = gbuf(b);
            if (bcast) {
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < G.cols(); ++c) gb[c] += G.at(r, c);
            } else {
                add_into(gb, G);
            }
        };
    return id;
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    const bool bcast = !A.same_shape(B);
    if (bcast && !(B.rank() == 1 && A.rank() == 2 && B.size() == A.cols()))
        throw ShapeError("sub: shape " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    if (bcast) {
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) -= B[c];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, b, bcast] {
            const Tensor& G = node(id).grad;
            add_into(gbuf(a), G);
            Tensor& gb = gbuf(b);
            if (bcast) {
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < G.cols(); ++c) gb[c] -= G.at(r, c);
            } else {
                for (std::size_t i = 0; i < G.size(); ++i) gb[i] -= G[i];
            }
        };
    return id;
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    const bool bcast = !A.same_shape(B);
    if (bcast && !(B.rank() == 1 && A.rank() == 2 && B.size() == A.cols()))
        throw ShapeError("mul: shape " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    if (bcast) {
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) *= B[c];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, b, bcast] {
            const Tensor& G = node(id).grad;
            const Tensor& A2 = val(a);
            const Tensor& B2 = val(b);
            Tensor& ga = gbuf(a);
            Tensor& gb = gbuf(b);
            if (bcast) {
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < G.cols(); ++c) {
                        ga.at(r, c) += G.at(r, c) * B2[c];
                        gb[c] += G.at(r, c) * A2.at(r, c);
                    }
            } else {
                for (std::size_t i = 0; i < G.size(); ++i) {
                    ga[i] += G[i] * B2[i];
                    gb[i] += G[i] * A2[i];
                }
            }
        };
    return id;
}

Tape::Id Tape::scale(Id a, real c) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, c] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += c * G[i];
        };
    return id;
}

Tape::Id Tape::relu(Id a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0 ? out[i] : real(0);
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a] {
            const Tensor& G = node(id).grad;
            const Tensor& A = val(a);
            Tensor& ga = gbuf(a);
            for (std::size_t i = 0; i < G.size(); ++i)
                if (A[i] > 0) ga[i] += G[i];
        };
    return id;
}

Tape::Id Tape::tanh_op(Id a) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a] {
            const Tensor& G = node(id).grad;
            const Tensor& Y = node(id).val;
            Tensor& ga = gbuf(a);
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * (1 - Y[i] * Y[i]);
        };
    return id;
}

Tape::Id Tape::softmax_rows(Id a) {
    const Tensor& A = val(a);
    require_rank2(A, "softmax_rows");
    Tensor out = A;
    const std::size_t R = A.rows(), C = A.cols();
    for (std::size_t r = 0; r < R; ++r) {
        real mx = out.at(r, 0);
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, out.at(r, c));
        real z = 0;
        for (std::size_t c = 0; c < C; ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - mx);
            z += out.at(r, c);
        }
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) /= z;
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a] {
            const Tensor& G = node(id).grad;
            const Tensor& Y = node(id).val;
            Tensor& ga = gbuf(a);
            const std::size_t R = Y.rows(), C = Y.cols();
            for (std::size_t r = 0; r < R; ++r) {
                real dot = 0;
                for (std::size_t c = 0; c < C; ++c) dot += G.at(r, c) * Y.at(r, c);
                for (std::size_t c = 0; c < C; ++c)
                    ga.at(r, c) += Y.at(r, c) * (G.at(r, c) - dot);
            }
        };
    return id;
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id shift) {
    const Tensor& X = val(x);
    require_rank2(X, "layer_norm");
    const Tensor& Gn = val(gain);
    const Tensor& Sh = val(shift);
    const std::size_t R = X.rows(), C = X.cols();
    if (Gn.size() != C || Sh.size() != C)
        throw ShapeError("layer_norm: gain/shift length must be " + std::to_string(C));
    Tensor out({R, C});
    std::vector<real> norm(R * C), inv_std(R);
    for (std::size_t r = 0; r < R; ++r) {
        real mu = 0;
        for (std::size_t c = 0; c < C; ++c) mu += X.at(r, c);
        mu /= real(C);
        real var = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const real d = X.at(r, c) - mu;
            var += d * d;
        }
        var /= real(C);
        const real is = real(1) / std::sqrt(var + kLayerNormEps);
        inv_std[r] = is;
        for (std::size_t c = 0; c < C; ++c) {
            const real nv = (X.at(r, c) - mu) * is;
            norm[r * C + c] = nv;
            out.at(r, c) = Gn[c] * nv + Sh[c];
        }
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, x, gain, shift, norm = std::move(norm),
                         inv_std = std::move(inv_std)] {
            const Tensor& G = node(id).grad;
            const Tensor& Gn = val(gain);
            Tensor& gx = gbuf(x);
            Tensor& gg = gbuf(gain);
            Tensor& gs = gbuf(shift);
            const std::size_t R = G.rows(), C = G.cols();
            for (std::size_t r = 0; r < R; ++r) {
                real sum_gp = 0, sum_gpn = 0;
                for (std::size_t c = 0; c < C; ++c) {
                    const real g = G.at(r, c);
                    const real nv = norm[r * C + c];
                    gg[c] += g * nv;
                    gs[c] += g;
                    const real gp = g * Gn[c];
                    sum_gp += gp;
                    sum_gpn += gp * nv;
                }
                const real m_gp = sum_gp / real(C);
                const real m_gpn = sum_gpn / real(C);
                for (std::size_t c = 0; c < C; ++c) {
                    const real gp = G.at(r, c) * Gn[c];
                    gx.at(r, c) += inv_std[r] * (gp - m_gp - norm[r * C + c] * m_gpn);
                }
            }
        };
    return id;
}

Tape::Id Tape::mean(Id a) {
    const Tensor& A = val(a);
    if (A.size() == 0) throw ShapeError("mean of an empty tensor");
    real s = 0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    Id id = push(Tensor::scalar(s / real(A.size())));
    if (recording_)
        node(id).back = [this, id, a] {
            const real g = node(id).grad[0] / real(val(a).size());
            Tensor& ga = gbuf(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        };
    return id;
}

Tape::Id Tape::sum(Id a) {
    const Tensor& A = val(a);
    real s = 0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    Id id = push(Tensor::scalar(s));
    if (recording_)
        node(id).back = [this, id, a] {
            const real g = node(id).grad[0];
            Tensor& ga = gbuf(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        };
    return id;
}

Tape::Id Tape::slice_rows(Id a, std::size_t row0, std::size_t nrows) {
    const Tensor& A = val(a);
    require_rank2(A, "slice_rows");
    if (row0 + nrows > A.rows())
        throw ShapeError("slice_rows: range past end of " + A.shape_str());
    const std::size_t C = A.cols();
    Tensor out({nrows, C});
    std::copy(A.data() + row0 * C, A.data() + (row0 + nrows) * C, out.data());
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, row0] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            const std::size_t C = G.cols();
            for (std::size_t r = 0; r < G.rows(); ++r)
                for (std::size_t c = 0; c < C; ++c) ga.at(row0 + r, c) += G.at(r, c);
        };
    return id;
}

Tape::Id Tape::gather_rows(Id a, std::vector<std::size_t> idx) {
    const Tensor& A = val(a);
    require_rank2(A, "gather_rows");
    const std::size_t C = A.cols();
    Tensor out({idx.size(), C});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= A.rows()) throw ShapeError("gather_rows: index past end");
        std::copy(A.data() + idx[r] * C, A.data() + (idx[r] + 1) * C, out.data() + r * C);
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, idx = std::move(idx)] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            const std::size_t C = G.cols();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t c = 0; c < C; ++c) ga.at(idx[r], c) += G.at(r, c);
        };
    return id;
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t C = val(parts[0]).cols();
    std::size_t R = 0;
    for (Id p : parts) {
        if (val(p).cols() != C)
            throw ShapeError("concat_rows: column mismatch " + val(p).shape_str());
        R += val(p).rows();
    }
    Tensor out({R, C});
    std::size_t r0 = 0;
    for (Id p : parts) {
        const Tensor& P = val(p);
        std::copy(P.data(), P.data() + P.size(), out.data() + r0 * C);
        r0 += P.rows();
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, parts] {
            const Tensor& G = node(id).grad;
            const std::size_t C = G.cols();
            std::size_t r0 = 0;
            for (Id p : parts) {
                Tensor& gp = gbuf(p);
                const std::size_t pr = val(p).rows();
                for (std::size_t r = 0; r < pr; ++r)
                    for (std::size_t c = 0; c < C; ++c) gp.at(r, c) += G.at(r0 + r, c);
                r0 += pr;
            }
        };
    return id;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t R = val(parts[0]).rows();
    std::size_t C = 0;
    for (Id p : parts) {
        if (val(p).rows() != R)
            throw ShapeError("concat_cols: row mismatch " + val(p).shape_str());
        C += val(p).cols();
    }
    Tensor out({R, C});
    std::size_t c0 = 0;
    for (Id p : parts) {
        const Tensor& P = val(p);
        for (std::size_t r = 0; r < R; ++r)
            std::copy(P.data() + r * P.cols(), P.data() + (r + 1) * P.cols(),
                      out.data() + r * C + c0);
        c0 += P.cols();
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, parts] {
            const Tensor& G = node(id).grad;
            std::size_t c0 = 0;
            for (Id p : parts) {
                Tensor& gp = gbuf(p);
                const std::size_t pc = gp.cols();
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < pc; ++c) gp.at(r, c) += G.at(r, c0 + c);
                c0 += pc;
            }
        };
    return id;
}

Tape::Id Tape::tile_rows(Id a, std::size_t times) {
    const Tensor& A = val(a);
    require_rank2(A, "tile_rows");
    const std::size_t R = A.rows(), C = A.cols();
    Tensor out({R * times, C});
    for (std::size_t t = 0; t < times; ++t)
        std::copy(A.data(), A.data() + A.size(), out.data() + t * A.size());
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, times] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            const std::size_t R = ga.rows(), C = ga.cols();
            for (std::size_t t = 0; t < times; ++t)
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c)
                        ga.at(r, c) += G.at(t * R + r, c);
        };
    return id;
}

Tape::Id Tape::row_scale(Id a, std::vector<real> w) {
    const Tensor& A = val(a);
    require_rank2(A, "row_scale");
    if (w.size() != A.rows())
        throw ShapeError("row_scale: weight count " + std::to_string(w.size()) +
                         " vs rows of " + A.shape_str());
    Tensor out = A;
    const std::size_t C = A.cols();
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) *= w[r];
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, w = std::move(w)] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            const std::size_t C = G.cols();
            for (std::size_t r = 0; r < G.rows(); ++r)
                for (std::size_t c = 0; c < C; ++c) ga.at(r, c) += w[r] * G.at(r, c);
        };
    return id;
}

Tape::Id Tape::group_mean_rows(Id a, std::size_t group) {
    const Tensor& A = val(a);
    require_rank2(A, "group_mean_rows");
    if (group == 0 || A.rows() % group != 0)
        throw ShapeError("group_mean_rows: rows of " + A.shape_str() +
                         " not divisible by group " + std::to_string(group));
    const std::size_t N = A.rows() / group, C = A.cols();
    Tensor out({N, C});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < group; ++j)
            for (std::size_t c = 0; c < C; ++c)
                out.at(i, c) += A.at(i * group + j, c) / real(group);
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, group] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            const std::size_t C = G.cols();
            for (std::size_t i = 0; i < G.rows(); ++i)
                for (std::size_t j = 0; j < group; ++j)
                    for (std::size_t c = 0; c < C; ++c)
                        ga.at(i * group + j, c) += G.at(i, c) / real(group);
        };
    return id;
}

Tape::Id Tape::group_head_rows(Id a, std::size_t group) {
    const Tensor& A = val(a);
    require_rank2(A, "group_head_rows");
    if (group == 0 || A.rows() % group != 0)
        throw ShapeError("group_head_rows: rows of " + A.shape_str() +
                         " not divisible by group " + std::to_string(group));
    const std::size_t N = A.rows() / group, C = A.cols();
    Tensor out({N, C});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < C; ++c) out.at(i, c) = A.at(i * group, c);
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, group] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            for (std::size_t i = 0; i < G.rows(); ++i)
                for (std::size_t c = 0; c < G.cols(); ++c)
                    ga.at(i * group, c) += G.at(i, c);
        };
    return id;
}

Tape::Id Tape::prepend_group_head(Id a, Id head, std::size_t group) {
    const Tensor& A = val(a);
    const Tensor& H = val(head);
    require_rank2(A, "prepend_group_head");
    if (group == 0 || A.rows() % group != 0)
        throw ShapeError("prepend_group_head: rows of " + A.shape_str() +
                         " not divisible by group " + std::to_string(group));
    if (H.cols() != A.cols() || H.rows() != 1)
        throw ShapeError("prepend_group_head: head must be 1x" + std::to_string(A.cols()) +
                         ", got " + H.shape_str());
    const std::size_t N = A.rows() / group, C = A.cols(), s = group + 1;
    Tensor out({N * s, C});
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t c = 0; c < C; ++c) out.at(i * s, c) = H.at(0, c);
        for (std::size_t j = 0; j < group; ++j)
            for (std::size_t c = 0; c < C; ++c)
                out.at(i * s + 1 + j, c) = A.at(i * group + j, c);
    }
    Id id = push(std::move(out));
    if (recording_)
        node(id).back = [this, id, a, head, group] {
            const Tensor& G = node(id).grad;
            Tensor& ga = gbuf(a);
            Tensor& gh = gbuf(head);
            const std::size_t C = G.cols(), s = group + 1, N = G.rows() / s;
            for (std::size_t i = 0; i < N; ++i) {
                for (std::size_t c = 0; c < C; ++c) gh.at(0, c) += G.at(i * s, c);
                for (std::size_t j = 0; j < group; ++j)
                    for (std::size_t c = 0; c < C; ++c)
                        ga.at(i * group + j, c) += G.at(i * s + 1 + j, c);
            }
        };
    return id;
}

double grad_check(const std::function<Tape::Id(Tape&)>& build,
                  const std::vector<Param*>& params, double h) {
    if (h <= 0) throw ConfigError("grad_check: step h must be positive");

    const auto eval = [&]() -> double {
        Tape t(false);
        Tape::Id id = build(t);
        const Tensor& v = t.val(id);
        if (v.size() != 1) throw ShapeError("grad_check: loss must be scalar");
        if (!std::isfinite(static_cast<double>(v[0])))
            throw NumericError("grad_check: non-finite loss");
        return static_cast<double>(v[0]);
    };

    for (Param* p : params) p->zero_grad();
    {
        Tape t(true);
        Tape::Id id = build(t);
        if (!t.val(id).all_finite()) throw NumericError("grad_check: non-finite loss");
        t.backward(id);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) analytic.push_back(p->grad);

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const real saved = p->value[i];
            p->value[i] = saved + static_cast<real>(h);
            const double fp = eval();
            p->value[i] = saved - static_cast<real>(h);
            const double fm = eval();
            p->value[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = static_cast<double>(analytic[pi][i]);
            if (std::abs(numeric) < 1e-8 && std::abs(a) < 1e-8) continue;
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace cet
