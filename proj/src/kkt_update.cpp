#include <cyqlone/kkt_solver.hpp>
#include <cyqlone/worker_pool.hpp>

#include "kkt_internal.hpp"

#include <cmath>

namespace cyqlone::kkt {

using batla::CView;
using batla::HyhHandle;
using batla::HyhPair;
using batla::MatKind;
using batla::Signature;
using batla::View;
using detail::lane_range;

index_t SigmaDelta::total_rank() const {
    index_t r = 0;
    for (const Vec &v : stage)
        for (real_t x : v)
            if (x != 0)
                ++r;
    for (real_t x : terminal)
        if (x != 0)
            ++r;
    return r;
}

Vec active_set_delta(const std::vector<bool> &prev,
                     const std::vector<bool> &now, const Vec &sigma) {
    assert(prev.size() == now.size() && now.size() == sigma.size());
    Vec d(sigma.size(), 0);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (now[i] && !prev[i])
            d[i] = sigma[i];
        else if (!now[i] && prev[i])
            d[i] = -sigma[i];
    }
    return d;
}

namespace {

// Dense column-growable work matrix for the update columns of one block
// column, plus its signature.
struct UpdateCols {
    Mat yu, yx, yl; ///< rows nu / nx / nx, shared logical width m
    Signature signs;
    index_t m = 0;

    UpdateCols(index_t nu, index_t nx, index_t cap)
        : yu(nu, cap), yx(nx, cap), yl(nx, cap), signs(cap) {}

    View viewu(index_t upto) {
        return {yu.a.data(), yu.rows, upto, 1, yu.cols, 1};
    }
    View viewx(index_t upto) {
        return {yx.a.data(), yx.rows, upto, 1, yx.cols, 1};
    }
    View viewl(index_t upto) {
        return {yl.a.data(), yl.rows, upto, 1, yl.cols, 1};
    }
};

View mat_view(Mat &m, index_t cols = -1) {
    return {m.a.data(), m.rows, cols < 0 ? m.cols : cols, 1, m.cols, 1};
}

/// Per-column low-rank update corresponding to the Riccati factorization:
/// hyperbolic transforms stage by stage, emitting the Schur update blocks
/// XiF (row c) and XiB (row c-1) with their shared signature.
struct ColXi {
    Mat xif, xib;
    Signature signs;
    bool refactored = false;
};

void update_column(Factor &f, const EqOCP &pp, const std::vector<Mat> &C,
                   const std::vector<Mat> &D, const Mat &C_term,
                   const SigmaDelta &ds, index_t c, index_t cap, ColXi &out) {
    const index_t nx = f.nx, nu = f.nu, n = f.part.n_per;
    const index_t N = f.N_orig;
    UpdateCols cols(nu, nx, cap);
    Mat yu2(nu, cap), yx2(nx, cap);
    HyhHandle hx_first;
    const Signature df_u(nu, +1), df_x(nx, +1);

    for (index_t s = 0; s < n; ++s) {
        const index_t j = f.part.stage_of(c, s);
        // append the update columns of this stage, scaled by sqrt|dsigma|
        if (j < N) {
            const Vec &dsj = ds.stage[static_cast<std::size_t>(j)];
            for (index_t i = 0; i < static_cast<index_t>(dsj.size()); ++i) {
                real_t dv = dsj[static_cast<std::size_t>(i)];
                if (dv == 0)
                    continue;
                real_t sq = std::sqrt(std::abs(dv));
                index_t k = cols.m++;
                cols.signs[k] = dv > 0 ? +1 : -1;
                for (index_t a = 0; a < nu; ++a)
                    cols.yu(a, k) = D[static_cast<std::size_t>(j)](i, a) * sq;
                for (index_t a = 0; a < nx; ++a)
                    cols.yx(a, k) =
                        j == 0 ? 0
                               : C[static_cast<std::size_t>(j)](i, a) * sq;
                for (index_t a = 0; a < nx; ++a)
                    cols.yl(a, k) = 0;
            }
        }
        if (j == 0) {
            // terminal constraint rows act on the x part of the u^0 stage
            for (index_t i = 0;
                 i < static_cast<index_t>(ds.terminal.size()); ++i) {
                real_t dv = ds.terminal[static_cast<std::size_t>(i)];
                if (dv == 0)
                    continue;
                real_t sq     = std::sqrt(std::abs(dv));
                index_t k     = cols.m++;
                cols.signs[k] = dv > 0 ? +1 : -1;
                for (index_t a = 0; a < nu; ++a)
                    cols.yu(a, k) = 0;
                for (index_t a = 0; a < nx; ++a)
                    cols.yx(a, k) = C_term(i, a) * sq;
                for (index_t a = 0; a < nx; ++a)
                    cols.yl(a, k) = 0;
            }
        }
        const index_t m = cols.m;
        Signature sg(m);
        for (index_t k = 0; k < m; ++k)
            sg[k] = cols.signs[k];
        if (m > 0) {
            HyhPair pairs[3] = {
                {f.lr(s, c), cols.viewu(m)},
                {f.ls(s, c), cols.viewx(m)},
                {lane_range(f.LB[static_cast<std::size_t>(s)]
                                .group(c / f.opts.vlen),
                            c % f.opts.vlen, 1),
                 cols.viewl(m)},
            };
            batla::hyh_transform({pairs, 3}, df_u, sg, nu, nullptr, c);
        }
        if (s + 1 < n) {
            if (m > 0) {
                // stabilized dynamics pick up the Phi_lambda S Phi_x' term
                View acl = lane_range(
                    f.Acl[static_cast<std::size_t>(s)].group(c / f.opts.vlen),
                    c % f.opts.vlen, 1);
                for (index_t k = 0; k < m; ++k) {
                    real_t sk = static_cast<real_t>(cols.signs[k]);
                    for (index_t a = 0; a < nx; ++a)
                        for (index_t b = 0; b < nx; ++b)
                            acl(0, a, b) +=
                                sk * cols.yl(a, k) * cols.yx(b, k);
                }
                batla::flops::add(
                    static_cast<std::uint64_t>(m * nx * nx));
                // propagate through the dynamics: next Yu/Yx from Phi_x
                CView bat = lane_range(
                    f.BAt[static_cast<std::size_t>(s + 1)]
                        .group(c / f.opts.vlen),
                    c % f.opts.vlen, 1);
                View vu2 = mat_view(yu2, m), vx2 = mat_view(yx2, m);
                batla::set_zero(vu2);
                batla::set_zero(vx2);
                batla::gemm(vu2, bat.block(0, 0, nu, nx), false,
                            CView(cols.viewx(m)), false, +1);
                batla::gemm(vx2, bat.block(nu, 0, nx, nx), false,
                            CView(cols.viewx(m)), false, +1);
                // update L_Q of this stage, then swap in the propagated
                // columns (Phi_lambda rides along unchanged)
                HyhPair px{f.lq(s, c), cols.viewx(m)};
                batla::hyh_transform({&px, 1}, df_x, sg, nx, nullptr, c);
                for (index_t k = 0; k < m; ++k) {
                    for (index_t a = 0; a < nu; ++a)
                        cols.yu(a, k) = yu2(a, k);
                    for (index_t a = 0; a < nx; ++a)
                        cols.yx(a, k) = yx2(a, k);
                }
            }
        } else {
            // first stage of the interval: keep the transform handle and
            // emit the Schur update blocks
            HyhPair px{f.lq(s, c), cols.viewx(m)};
            batla::hyh_transform({&px, 1}, df_x, sg, nx, &hx_first, c);
            out.xif   = Mat(nx, m);
            out.xib   = Mat(nx, m);
            out.signs = sg;
            for (index_t k = 0; k < m; ++k)
                for (index_t a = 0; a < nx; ++a)
                    out.xif(a, k) = cols.yl(a, k);
            if (m > 0) {
                Mat negT(nx, nx);
                View tl = lane_range(f.T.group(c / f.opts.vlen),
                                     c % f.opts.vlen, 1);
                for (index_t a = 0; a < nx; ++a)
                    for (index_t b = 0; b < nx; ++b)
                        negT(a, b) = -tl(0, a, b);
                View la = lane_range(f.LA.group(c / f.opts.vlen),
                                     c % f.opts.vlen, 1);
                HyhPair apply_pairs[2] = {
                    {la, mat_view(out.xif)},
                    {mat_view(negT), mat_view(out.xib)},
                };
                batla::hyh_apply(hx_first, {apply_pairs, 2});
                for (index_t a = 0; a < nx; ++a)
                    for (index_t b = 0; b < nx; ++b)
                        tl(0, a, b) = -negT(a, b);
            }
        }
    }
}

// dst -= Xi S Xi' (symmetric, whole block written)
void sub_outer(View dst, const Mat &xi, const Signature &s) {
    const index_t n = dst.rows, m = xi.cols;
    for (index_t k = 0; k < m; ++k) {
        real_t sk = static_cast<real_t>(s[k]);
        for (index_t a = 0; a < n; ++a)
            for (index_t b = 0; b < n; ++b)
                dst(0, a, b) -= sk * xi(a, k) * xi(b, k);
    }
    batla::flops::add(static_cast<std::uint64_t>(m * n * n));
}

// dst -= XiL S XiR'
void sub_cross(View dst, const Mat &xl, const Mat &xr, const Signature &s) {
    const index_t n = dst.rows, m = xl.cols;
    assert(xr.cols == m);
    for (index_t k = 0; k < m; ++k) {
        real_t sk = static_cast<real_t>(s[k]);
        for (index_t a = 0; a < n; ++a)
            for (index_t b = 0; b < n; ++b)
                dst(0, a, b) -= sk * xl(a, k) * xr(b, k);
    }
    batla::flops::add(static_cast<std::uint64_t>(m * n * n));
}

Mat hcat(const Mat &a, const Mat &b) {
    Mat out(std::max(a.rows, b.rows), a.cols + b.cols);
    for (index_t r = 0; r < a.rows; ++r)
        for (index_t c = 0; c < a.cols; ++c)
            out(r, c) = a(r, c);
    for (index_t r = 0; r < b.rows; ++r)
        for (index_t c = 0; c < b.cols; ++c)
            out(r, a.cols + c) = b(r, c);
    return out;
}

Signature scat(const Signature &a, const Signature &b) {
    Signature out(a.size() + b.size());
    for (index_t i = 0; i < a.size(); ++i)
        out[i] = a[i];
    for (index_t i = 0; i < b.size(); ++i)
        out[a.size() + i] = b[i];
    return out;
}

/// Cyclic-reduction factorization update of the Schur complement: level by
/// level, eliminated columns absorb their pending update blocks with
/// hyperbolic transforms; the stored intermediate reduced systems are kept
/// in sync so any level (or a breakdown) can fall back to refactorization.
void update_schur(Factor &f, std::vector<ColXi> &cx, UpdateReport &rep,
                  index_t workers) {
    const index_t P = f.part.P, nx = f.nx;
    blocktri::CRFactor &cr = f.schur_cr;
    const index_t full     = cr.n_levels - 1;
    const real_t rho       = f.opts.rho;

    std::vector<Mat> xif(static_cast<std::size_t>(P), Mat(nx, 0)),
        xib(static_cast<std::size_t>(P), Mat(nx, 0));
    std::vector<Signature> sf(static_cast<std::size_t>(P), Signature(0)),
        sb(static_cast<std::size_t>(P), Signature(0));
    for (index_t c = 0; c < P; ++c) {
        xif[static_cast<std::size_t>(c)] =
            std::move(cx[static_cast<std::size_t>(c)].xif);
        sf[static_cast<std::size_t>(c)] =
            cx[static_cast<std::size_t>(c)].signs;
        index_t prev = (c - 1 + P) % P;
        xib[static_cast<std::size_t>(prev)] =
            std::move(cx[static_cast<std::size_t>(c)].xib);
        sb[static_cast<std::size_t>(prev)] =
            cx[static_cast<std::size_t>(c)].signs;
    }

    const Signature df(nx, -1); // the Schur factor carries signature -I
    index_t refactor_from = -1;
    for (index_t l = 0; l <= full; ++l) {
        const index_t sz = P >> l;
        // refresh the stored level-l reduced system from the pending blocks
        auto &Ml = cr.M_lvl[static_cast<std::size_t>(l)];
        auto &Kl = cr.K_lvl[static_cast<std::size_t>(l)];
        for (index_t k = 0; k < sz; ++k) {
            index_t i = k << l;
            sub_outer(Ml.lane(k), xif[static_cast<std::size_t>(i)],
                      sf[static_cast<std::size_t>(i)]);
            sub_outer(Ml.lane(k), xib[static_cast<std::size_t>(i)],
                      sb[static_cast<std::size_t>(i)]);
            if (k + 1 < sz) {
                index_t b = (k + 1) << l;
                assert(sf[static_cast<std::size_t>(b)].size() ==
                       sb[static_cast<std::size_t>(i)].size());
                sub_cross(Kl.lane(k), xif[static_cast<std::size_t>(b)],
                          xib[static_cast<std::size_t>(i)],
                          sf[static_cast<std::size_t>(b)]);
            }
        }
        if (l == full)
            break;
        // rank policy: refactor the remaining levels when the accumulated
        // update width reaches rho * nx
        index_t max_m = 0;
        for (index_t mm = 0; mm < sz / 2; ++mm) {
            index_t i = (2 * mm + 1) << l;
            max_m     = std::max(max_m,
                                 xif[static_cast<std::size_t>(i)].cols +
                                     xib[static_cast<std::size_t>(i)].cols);
        }
        if (static_cast<real_t>(max_m) >= rho * static_cast<real_t>(nx)) {
            refactor_from = l;
            break;
        }
        try {
            for (index_t mm = 0; mm < sz / 2; ++mm) {
                const index_t i = (2 * mm + 1) << l;
                const index_t a = (2 * mm) << l;
                const index_t b = ((2 * mm + 2) << l) % P;
                Mat g           = hcat(xif[static_cast<std::size_t>(i)],
                                       xib[static_cast<std::size_t>(i)]);
                Signature sg    = scat(sf[static_cast<std::size_t>(i)],
                                       sb[static_cast<std::size_t>(i)]);
                const index_t m = g.cols;
                if (m == 0)
                    continue;
                HyhHandle h;
                HyhPair pl{cr.L[static_cast<std::size_t>(l)].lane(mm),
                           mat_view(g)};
                batla::hyh_transform({&pl, 1}, df, sg, nx, &h, i);
                // U row propagates the pending blocks of the upper neighbor
                assert(xib[static_cast<std::size_t>(a)].cols ==
                       xif[static_cast<std::size_t>(i)].cols);
                Mat ga = hcat(xib[static_cast<std::size_t>(a)],
                              Mat(nx, xib[static_cast<std::size_t>(i)].cols));
                HyhPair pu{cr.U[static_cast<std::size_t>(l)].lane(mm),
                           mat_view(ga)};
                batla::hyh_apply(h, {&pu, 1});
                xib[static_cast<std::size_t>(a)] = std::move(ga);
                sb[static_cast<std::size_t>(a)]  = sg;
                // Y row likewise; at the horizon boundary Y is structurally
                // zero, so mix against a zero scratch block instead
                assert(xif[static_cast<std::size_t>(b)].cols ==
                       xib[static_cast<std::size_t>(i)].cols);
                Mat gb = hcat(Mat(nx, xif[static_cast<std::size_t>(i)].cols),
                              xif[static_cast<std::size_t>(b)]);
                if (i + (index_t{1} << l) < P) {
                    HyhPair py{cr.Y[static_cast<std::size_t>(l)].lane(mm),
                               mat_view(gb)};
                    batla::hyh_apply(h, {&py, 1});
                } else {
                    Mat scratch(nx, nx);
                    HyhPair py{mat_view(scratch), mat_view(gb)};
                    batla::hyh_apply(h, {&py, 1});
                }
                xif[static_cast<std::size_t>(b)] = std::move(gb);
                sf[static_cast<std::size_t>(b)]  = sg;
            }
        } catch (const batla::hyh_breakdown &) {
            refactor_from = l;
            break;
        }
        ++rep.schur_levels_updated;
    }
    if (refactor_from >= 0) {
        // level refactor_from holds the refreshed reduced system; the deeper
        // intermediates are recomputed from it
        blocktri::cr_refactor_from(cr, refactor_from, workers);
        rep.schur_refactored = true;
    } else {
        // final reduced system: recompute the base factor / tail artifacts
        if (f.tail_size <= 1)
            blocktri::cr_refactor_from(cr, full, workers);
    }
    if (f.tail_size > 1)
        detail::refresh_tail(f, workers);
}

} // namespace

UpdateReport update(Factor &f, const EqOCP &p_new, const std::vector<Mat> &C,
                    const std::vector<Mat> &D, const Mat &C_term,
                    const SigmaDelta &ds) {
    UpdateReport rep;
    const index_t P = f.part.P, nx = f.nx, n = f.part.n_per;
    const index_t workers = std::max<index_t>(1, f.opts.workers);
    const EqOCP pp        = pad_problem(p_new, P);
    assert(pp.N == f.part.N_pad && pp.nx == nx && pp.nu == f.nu);
    // refresh the packed Hessians (dynamics are unchanged)
    detail::pack_columns(pp, f.part, f);

    // per-column accumulated ranks decide update vs refactorization
    std::vector<index_t> col_rank(static_cast<std::size_t>(P), 0);
    for (index_t c = 0; c < P; ++c) {
        index_t r = 0;
        for (index_t s = 0; s < n; ++s) {
            index_t j = f.part.stage_of(c, s);
            if (j < f.N_orig)
                for (real_t x : ds.stage[static_cast<std::size_t>(j)])
                    if (x != 0)
                        ++r;
            if (j == 0)
                for (real_t x : ds.terminal)
                    if (x != 0)
                        ++r;
        }
        col_rank[static_cast<std::size_t>(c)] = r;
    }

    std::vector<ColXi> cx(static_cast<std::size_t>(P));
    std::vector<char> needs_refactor(static_cast<std::size_t>(P), 0);
    parallel_for(P, workers, [&](index_t c) {
        ColXi &out = cx[static_cast<std::size_t>(c)];
        index_t r  = col_rank[static_cast<std::size_t>(c)];
        if (static_cast<real_t>(r) >= f.opts.rho * static_cast<real_t>(nx)) {
            needs_refactor[static_cast<std::size_t>(c)] = 1;
            return;
        }
        try {
            update_column(f, pp, C, D, C_term, ds, c, r, out);
        } catch (const batla::hyh_breakdown &) {
            needs_refactor[static_cast<std::size_t>(c)] = 1;
        }
    });
    bool any_refactor = false;
    parallel_for(P, workers, [&](index_t c) {
        if (!needs_refactor[static_cast<std::size_t>(c)])
            return;
        detail::factor_lanes(f, c / f.opts.vlen, c % f.opts.vlen, 1);
    });
    for (index_t c = 0; c < P; ++c) {
        if (needs_refactor[static_cast<std::size_t>(c)]) {
            any_refactor = true;
            ++rep.columns_refactored;
        } else if (col_rank[static_cast<std::size_t>(c)] > 0) {
            ++rep.columns_updated;
        }
    }
    // keep the per-column Schur contributions in sync (cheap identities)
    for (index_t c = 0; c < P; ++c) {
        if (needs_refactor[static_cast<std::size_t>(c)])
            continue; // factor_lanes refreshed them already
        ColXi &o = cx[static_cast<std::size_t>(c)];
        if (o.signs.size() == 0)
            continue;
        sub_outer(f.sc_Mfwd.lane(c), o.xif, o.signs);
        sub_outer(f.sc_Mbwd.lane(c), o.xib, o.signs);
        // W~ = W + XiB S XiF'
        View wv = f.sc_W.lane(c);
        for (index_t k = 0; k < o.signs.size(); ++k) {
            real_t sk = static_cast<real_t>(o.signs[k]);
            for (index_t a = 0; a < nx; ++a)
                for (index_t b = 0; b < nx; ++b)
                    wv(0, a, b) += sk * o.xib(a, k) * o.xif(b, k);
        }
    }

    if (any_refactor) {
        detail::assemble_schur(f);
        detail::factor_schur(f, workers);
        rep.schur_refactored = true;
    } else {
        update_schur(f, cx, rep, workers);
    }
    return rep;
}

} // namespace cyqlone::kkt
