#pragma once

// Internals shared between the factorization and the update paths.

#include <cyqlone/kkt_solver.hpp>

namespace cyqlone::kkt::detail {

using batla::CView;
using batla::MatKind;
using batla::View;

inline View lane_range(View v, index_t l0, index_t lc) {
    assert(l0 >= 0 && l0 + lc <= v.lanes);
    View out = v;
    out.data += l0;
    out.lanes = lc;
    return out;
}

/// Gathers the padded stage data into column-batched storage (H, BA, BAt).
void pack_columns(const EqOCP &p, const Partition &part, Factor &f);

/// Runs the modified Riccati recursion and the Schur-contribution
/// evaluation for lanes [l0, l0+lc) of storage group g, writing the factor
/// blocks and this slice of sc_Mfwd/sc_Mbwd/sc_W in place.
void factor_lanes(Factor &f, index_t g, index_t l0, index_t lc,
                  std::uint64_t *riccati_flops = nullptr,
                  std::uint64_t *schur_flops   = nullptr);

/// Reassembles the level-0 Schur system from the stored per-column
/// contributions.
void assemble_schur(Factor &f);

/// Factorizes the Schur complement by cyclic reduction with the configured
/// tail, starting from the stored level-0 system.
void factor_schur(Factor &f, index_t workers);

/// Rebuilds the tail artifacts (PCR factor or PCG preconditioner) from the
/// last stored reduced system.
void refresh_tail(Factor &f, index_t workers);

} // namespace cyqlone::kkt::detail
