#include <cyqlone/line_search.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyqlone::qpalm {

void LineSearchData::add_term(real_t alpha, real_t delta) {
    if (delta == real_t{0})
        return; // gradient orthogonal to the direction: constant term
    real_t t = alpha / delta;
    if (!std::isfinite(t))
        return; // one-sided bound: [delta tau - alpha]_+ is identically zero
    real_t w = delta * std::abs(delta);
    if (t <= 0) {
        if (w > 0) { // active for all tau >= 0
            eta += w;
            beta -= t * w;
        }
        // w < 0 terms with t <= 0 are active only for tau < t: never
        return;
    }
    pts.push_back({t, w});
}

void LineSearchData::finalize() {
    fence_lo = 0;
    fence_hi = static_cast<index_t>(pts.size());
}

real_t psi_prime_at(const LineSearchData &ls, real_t t) {
    real_t acc = ls.eta * t + ls.beta;
    for (const Breakpoint &p : ls.pts) {
        if (p.w > 0 && p.t < t)
            acc += p.w * (t - p.t);
        else if (p.w < 0 && p.t > t)
            acc -= p.w * (t - p.t);
    }
    return acc;
}

real_t psi_delta_at(const LineSearchData &ls, real_t t) {
    real_t acc = real_t{0.5} * ls.eta * t * t + ls.beta * t;
    for (const Breakpoint &p : ls.pts) {
        real_t w = std::abs(p.w);
        if (p.w > 0) {
            if (t > p.t)
                acc += real_t{0.5} * w * (t - p.t) * (t - p.t);
        } else {
            // active on [0, p.t): integral of |w| (s - p.t) ds
            real_t s = std::min(t, p.t);
            acc += w * (real_t{0.5} * s * s - p.t * s);
        }
    }
    return acc;
}

PsiPrimeIncremental::PsiPrimeIncremental(const LineSearchData &ls)
    : sorted_(ls.pts), eta_(ls.eta), beta_(ls.beta) {
    std::sort(sorted_.begin(), sorted_.end(),
              [](const Breakpoint &a, const Breakpoint &b) {
                  return a.t < b.t;
              });
    // start at the 0+ reference: fold all w<0 terms (active below their t)
    for (const Breakpoint &p : sorted_)
        if (p.w < 0) {
            eta_ -= p.w;
            beta_ += p.t * p.w;
        }
}

real_t PsiPrimeIncremental::operator()(real_t t) {
    const index_t n = static_cast<index_t>(sorted_.size());
    // crossing a breakpoint upward adds w, downward removes it
    while (pos_ < n && sorted_[static_cast<std::size_t>(pos_)].t < t) {
        const Breakpoint &p = sorted_[static_cast<std::size_t>(pos_)];
        eta_ += p.w;
        beta_ -= p.t * p.w;
        ++pos_;
    }
    while (pos_ > 0 && sorted_[static_cast<std::size_t>(pos_ - 1)].t >= t) {
        const Breakpoint &p = sorted_[static_cast<std::size_t>(pos_ - 1)];
        eta_ -= p.w;
        beta_ += p.t * p.w;
        --pos_;
    }
    ref_ = t;
    return eta_ * t + beta_;
}

PartitionSums partition_breakpoints(LineSearchData &ls, real_t pivot) {
    PartitionSums out;
    auto first = ls.pts.begin() + ls.fence_lo;
    auto last  = ls.pts.begin() + ls.fence_hi;
    auto mid   = std::partition(first, last, [&](const Breakpoint &p) {
        return p.t < pivot;
    });
    out.mid = static_cast<index_t>(mid - ls.pts.begin());
    for (auto it = first; it != mid; ++it) {
        out.sum_w += it->w;
        out.sum_tw += it->t * it->w;
    }
    return out;
}

LineSearchResult line_search_exact(LineSearchData &ls) {
    ls.finalize();
    LineSearchResult res;
    // coefficients just above tau = 0
    real_t eta_lo = ls.eta, beta_lo = ls.beta;
    for (index_t i = ls.fence_lo; i < ls.fence_hi; ++i) {
        const Breakpoint &p = ls.pts[static_cast<std::size_t>(i)];
        if (p.w < 0) {
            eta_lo -= p.w;
            beta_lo += p.t * p.w;
        }
    }
    if (beta_lo >= 0) {
        if (beta_lo == 0)
            return res; // already optimal along the direction
        throw std::invalid_argument(
            "line_search_exact: not a descent direction (psi'(0) > 0)");
    }
    real_t tau_hi = std::numeric_limits<real_t>::infinity();
    bool first_iteration = true;
    constexpr index_t sort_threshold = 64;

    while (true) {
        const index_t count = ls.fence_hi - ls.fence_lo;
        if (count == 0) {
            // psi' is linear on the remaining bracket
            real_t tau = -beta_lo / eta_lo;
            res.tau    = std::isfinite(tau_hi) ? std::min(tau, tau_hi) : tau;
            return res;
        }
        if (count < sort_threshold) {
            // sort + linear scan over the few remaining breakpoints
            auto first = ls.pts.begin() + ls.fence_lo;
            auto last  = ls.pts.begin() + ls.fence_hi;
            std::sort(first, last, [](const Breakpoint &a,
                                      const Breakpoint &b) {
                return a.t < b.t;
            });
            real_t eta_c = eta_lo, beta_c = beta_lo;
            for (auto it = first; it != last; ++it) {
                ++res.iterations;
                if (eta_c * it->t + beta_c >= 0)
                    break;
                eta_c += it->w;
                beta_c -= it->t * it->w;
            }
            real_t tau = -beta_c / eta_c;
            res.tau    = std::isfinite(tau_hi) ? std::min(tau, tau_hi) : tau;
            return res;
        }
        // pick a pivot: first the largest breakpoint below one, then
        // median-of-three
        real_t pivot;
        if (first_iteration) {
            first_iteration = false;
            pivot           = -1;
            for (index_t i = ls.fence_lo; i < ls.fence_hi; ++i) {
                real_t t = ls.pts[static_cast<std::size_t>(i)].t;
                if (t < 1 && t > pivot)
                    pivot = t;
            }
            if (pivot <= 0)
                continue; // no breakpoint below one; fall through next round
            // evaluate at the pivot itself (it is a breakpoint)
        } else {
            real_t a = ls.pts[static_cast<std::size_t>(ls.fence_lo)].t;
            real_t b = ls.pts[static_cast<std::size_t>(
                                  ls.fence_lo + count / 2)].t;
            real_t c = ls.pts[static_cast<std::size_t>(ls.fence_hi - 1)].t;
            pivot    = std::max(std::min(a, b), std::min(std::max(a, b), c));
        }
        ++res.iterations;
        PartitionSums ps = partition_breakpoints(ls, pivot);
        real_t eta_p = eta_lo + ps.sum_w, beta_p = beta_lo - ps.sum_tw;
        real_t v = eta_p * pivot + beta_p;
        if (v == 0) {
            res.tau = pivot;
            return res;
        }
        if (v < 0) {
            // move the lower fence above the pivot; absorb ties as well
            eta_lo  = eta_p;
            beta_lo = beta_p;
            ls.fence_lo = ps.mid;
            index_t i = ls.fence_lo;
            for (index_t k = ls.fence_lo; k < ls.fence_hi; ++k) {
                Breakpoint &p = ls.pts[static_cast<std::size_t>(k)];
                if (p.t <= pivot) {
                    eta_lo += p.w;
                    beta_lo -= p.t * p.w;
                    std::swap(p, ls.pts[static_cast<std::size_t>(i++)]);
                }
            }
            ls.fence_lo = i;
        } else {
            tau_hi      = pivot;
            ls.fence_hi = ps.mid;
        }
    }
}

} // namespace cyqlone::qpalm
