#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyqlone::batla {

using index_t = std::int64_t;
using real_t  = double;

enum class MatKind : std::uint8_t {
    general,
    lower_triangular,
    upper_triangular,
    symmetric_lower,
};

/// Diagonal signature matrix, entries are +1 or -1.
struct Signature {
    std::vector<std::int8_t> signs;

    explicit Signature(index_t n = 0, std::int8_t s = +1)
        : signs(static_cast<std::size_t>(n), s) {
        assert(s == +1 || s == -1);
    }
    index_t size() const { return static_cast<index_t>(signs.size()); }
    std::int8_t operator[](index_t i) const {
        return signs[static_cast<std::size_t>(i)];
    }
    std::int8_t &operator[](index_t i) {
        return signs[static_cast<std::size_t>(i)];
    }
};

/// Mutable strided view of `lanes` equally-shaped matrices.
/// Element (lane l, row r, col c) lives at data[l + r*rstride + c*cstride].
template <class T>
struct BasicView {
    T *data           = nullptr;
    index_t rows      = 0;
    index_t cols      = 0;
    index_t lanes     = 0;
    index_t rstride   = 0;
    index_t cstride   = 0;

    T &operator()(index_t l, index_t r, index_t c) const {
        assert(l >= 0 && l < lanes && r >= 0 && r < rows && c >= 0 && c < cols);
        return data[l + r * rstride + c * cstride];
    }
    BasicView block(index_t r0, index_t c0, index_t nr, index_t nc) const {
        assert(r0 >= 0 && c0 >= 0 && r0 + nr <= rows && c0 + nc <= cols);
        return {data + r0 * rstride + c0 * cstride, nr, nc, lanes, rstride,
                cstride};
    }
    BasicView lane(index_t l) const {
        assert(l >= 0 && l < lanes);
        return {data + l, rows, cols, 1, rstride, cstride};
    }
    operator BasicView<const T>() const {
        return {data, rows, cols, lanes, rstride, cstride};
    }
};

using View  = BasicView<real_t>;
using CView = BasicView<const real_t>;

/// Batch of N_b equal-shape m-by-n matrices in compact interleaved storage.
/// Element (r, c) of matrix j lives at offset
///   (j % v) + v*r + v*m*c + v*m*n*(j / v).
class BatchMatrix {
  public:
    BatchMatrix() = default;
    BatchMatrix(index_t rows, index_t cols, index_t batch, index_t vlen,
                MatKind kind = MatKind::general)
        : rows_(rows), cols_(cols), batch_(batch), vlen_(vlen), kind_(kind) {
        assert(rows >= 0 && cols >= 0 && batch >= 0 && vlen >= 1);
        assert((vlen & (vlen - 1)) == 0 && "vlen must be a power of two");
        data_.assign(static_cast<std::size_t>(buffer_length()), real_t{0});
        fill_padding_neutral();
    }

    index_t rows() const { return rows_; }
    index_t cols() const { return cols_; }
    index_t batch() const { return batch_; }
    index_t vlen() const { return vlen_; }
    MatKind kind() const { return kind_; }
    void set_kind(MatKind k) { kind_ = k; }

    index_t num_groups() const {
        return batch_ == 0 ? 0 : (batch_ + vlen_ - 1) / vlen_;
    }
    index_t buffer_length() const { return vlen_ * rows_ * cols_ * num_groups(); }

    real_t *data() { return data_.data(); }
    const real_t *data() const { return data_.data(); }

    index_t offset(index_t j, index_t r, index_t c) const {
        assert(j >= 0 && j < batch_);
        return (j % vlen_) + vlen_ * r + vlen_ * rows_ * c +
               vlen_ * rows_ * cols_ * (j / vlen_);
    }
    real_t &operator()(index_t j, index_t r, index_t c) {
        return data_[static_cast<std::size_t>(offset(j, r, c))];
    }
    real_t operator()(index_t j, index_t r, index_t c) const {
        return data_[static_cast<std::size_t>(offset(j, r, c))];
    }

    /// View of storage group g, all vlen lanes (padding lanes included).
    View group(index_t g) {
        assert(g >= 0 && g < num_groups());
        return {data_.data() + g * vlen_ * rows_ * cols_, rows_, cols_, vlen_,
                vlen_, vlen_ * rows_};
    }
    CView group(index_t g) const {
        assert(g >= 0 && g < num_groups());
        return {data_.data() + g * vlen_ * rows_ * cols_, rows_, cols_, vlen_,
                vlen_, vlen_ * rows_};
    }
    /// Same, restricted to lanes that hold actual batch elements.
    View group_active(index_t g) {
        View v    = group(g);
        v.lanes   = active_lanes(g);
        return v;
    }
    CView group_active(index_t g) const {
        CView v   = group(g);
        v.lanes   = active_lanes(g);
        return v;
    }
    index_t active_lanes(index_t g) const {
        return std::min(vlen_, batch_ - g * vlen_);
    }

    /// Single-element view of matrix j.
    View lane(index_t j) {
        assert(j >= 0 && j < batch_);
        return {data_.data() + (j / vlen_) * vlen_ * rows_ * cols_ + (j % vlen_),
                rows_, cols_, 1, vlen_, vlen_ * rows_};
    }
    CView lane(index_t j) const {
        assert(j >= 0 && j < batch_);
        return {data_.data() + (j / vlen_) * vlen_ * rows_ * cols_ + (j % vlen_),
                rows_, cols_, 1, vlen_, vlen_ * rows_};
    }

    /// Reset padding lanes of the trailing group to neutral content:
    /// zeros, with unit diagonals for triangular/symmetric kinds.
    void fill_padding_neutral() {
        if (batch_ == 0 || kind_ == MatKind::general)
            return;
        index_t g = num_groups() - 1;
        for (index_t l = active_lanes(g); l < vlen_; ++l) {
            View v = group(g).lane(l);
            for (index_t d = 0; d < std::min(rows_, cols_); ++d)
                v(0, d, d) = real_t{1};
        }
    }

  private:
    index_t rows_ = 0, cols_ = 0, batch_ = 0, vlen_ = 1;
    MatKind kind_ = MatKind::general;
    std::vector<real_t> data_;
};

/// Dense row-major matrix used at the pack/unpack boundary and in tests.
struct DenseMatrix {
    index_t rows = 0, cols = 0;
    std::vector<real_t> a;

    DenseMatrix() = default;
    DenseMatrix(index_t m, index_t n)
        : rows(m), cols(n), a(static_cast<std::size_t>(m * n), real_t{0}) {}
    real_t &operator()(index_t r, index_t c) {
        return a[static_cast<std::size_t>(r * cols + c)];
    }
    real_t operator()(index_t r, index_t c) const {
        return a[static_cast<std::size_t>(r * cols + c)];
    }
    static DenseMatrix identity(index_t n) {
        DenseMatrix m(n, n);
        for (index_t i = 0; i < n; ++i)
            m(i, i) = 1;
        return m;
    }
};

/// Interleave a list of equal-shape dense matrices into compact storage.
/// Trailing slots of a partially filled final batch are zero-filled
/// (plus unit diagonals when a non-general kind is requested).
BatchMatrix pack(const std::vector<DenseMatrix> &mats, index_t vlen,
                 MatKind kind = MatKind::general);

/// Inverse of pack.
std::vector<DenseMatrix> unpack(const BatchMatrix &b);

/// Move the matrix at lane l to lane (l + shift) mod v within each batch.
BatchMatrix lane_rotate(const BatchMatrix &b, index_t shift);

} // namespace cyqlone::batla
