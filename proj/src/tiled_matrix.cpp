#include "enkf/tiled_matrix.hpp"

#include <algorithm>
#include <atomic>
#include <string>

#include "enkf/errors.hpp"

namespace enkf {

namespace {

std::atomic<std::int64_t> g_live_tiles{0};
std::atomic<std::int64_t> g_peak_tiles{0};

void count_tile() {
  const auto now = g_live_tiles.fetch_add(1) + 1;
  auto peak = g_peak_tiles.load();
  while (now > peak && !g_peak_tiles.compare_exchange_weak(peak, now)) {
  }
}

void uncount_tile() { g_live_tiles.fetch_sub(1); }

}  // namespace

namespace tile_stats {
std::int64_t live() { return g_live_tiles.load(); }
std::int64_t peak() { return g_peak_tiles.load(); }
void reset_peak() { g_peak_tiles.store(g_live_tiles.load()); }
}  // namespace tile_stats

// -----------------------------------------------------------------------------

Tile::Tile(Index rows, Index cols) : data_(Eigen::MatrixXd::Zero(rows, cols)), counted_(true) {
  count_tile();
}

Tile::Tile(const Tile& other) : data_(other.data_), counted_(other.counted_) {
  if (counted_) count_tile();
}

Tile::Tile(Tile&& other) noexcept : data_(std::move(other.data_)), counted_(other.counted_) {
  other.counted_ = false;
}

Tile& Tile::operator=(const Tile& other) {
  if (this != &other) {
    release();
    data_ = other.data_;
    counted_ = other.counted_;
    if (counted_) count_tile();
  }
  return *this;
}

Tile& Tile::operator=(Tile&& other) noexcept {
  if (this != &other) {
    release();
    data_ = std::move(other.data_);
    counted_ = other.counted_;
    other.counted_ = false;
  }
  return *this;
}

Tile::~Tile() { release(); }

void Tile::release() {
  if (counted_) uncount_tile();
  counted_ = false;
}

// -----------------------------------------------------------------------------

TiledMatrix::TiledMatrix(Index dim, Index tile_size) : dim_(dim), tile_size_(tile_size) {
  if (dim < 1) throw InvalidArgument("tiled matrix dimension must be positive");
  if (tile_size < 1) throw InvalidArgument("tile size must be positive");
  blocks_ = (dim + tile_size - 1) / tile_size;
  tiles_.reserve(static_cast<std::size_t>(blocks_ * (blocks_ + 1) / 2));
  for (Index bi = 0; bi < blocks_; ++bi)
    for (Index bj = bi; bj < blocks_; ++bj) tiles_.emplace_back(block_extent(bi), block_extent(bj));
}

TiledMatrix TiledMatrix::from_dense(const Eigen::MatrixXd& dense, Index tile_size) {
  if (dense.rows() != dense.cols()) throw InvalidArgument("from_dense needs a square matrix");
  return generate(dense.rows(), tile_size, [&](Index r0, Index c0, Eigen::MatrixXd& out) {
    for (Index c = 0; c < out.cols(); ++c)
      for (Index r = 0; r < out.rows(); ++r) {
        const Index i = r0 + r, j = c0 + c;
        out(r, c) = i <= j ? dense(i, j) : dense(j, i);
      }
  });
}

Index TiledMatrix::block_extent(Index block) const {
  return std::min(tile_size_, dim_ - block * tile_size_);
}

std::size_t TiledMatrix::slot(Index block_row, Index block_col) const {
  // Packed upper-triangular block order, row by row.
  return static_cast<std::size_t>(block_row * blocks_ - block_row * (block_row - 1) / 2 +
                                  (block_col - block_row));
}

Eigen::MatrixXd& TiledMatrix::tile(Index block_row, Index block_col) {
  return tiles_[slot(block_row, block_col)].data();
}

const Eigen::MatrixXd& TiledMatrix::tile(Index block_row, Index block_col) const {
  return tiles_[slot(block_row, block_col)].data();
}

double TiledMatrix::operator()(Index i, Index j) const {
  if (i > j) std::swap(i, j);
  const Index bi = block_of(i), bj = block_of(j);
  return tile(bi, bj)(i - block_begin(bi), j - block_begin(bj));
}

bool TiledMatrix::all_finite() const {
  return std::all_of(tiles_.begin(), tiles_.end(), [](const Tile& t) { return t.data().allFinite(); });
}

Eigen::MatrixXd TiledMatrix::to_dense() const {
  Eigen::MatrixXd out(dim_, dim_);
  for (Index bi = 0; bi < blocks_; ++bi)
    for (Index bj = bi; bj < blocks_; ++bj) {
      const auto& t = tile(bi, bj);
      out.block(block_begin(bi), block_begin(bj), t.rows(), t.cols()) = t;
      out.block(block_begin(bj), block_begin(bi), t.cols(), t.rows()) = t.transpose();
    }
  return out;
}

std::vector<std::pair<Index, Index>> TiledMatrix::stored_blocks() const {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(tiles_.size());
  for (Index bi = 0; bi < blocks_; ++bi)
    for (Index bj = bi; bj < blocks_; ++bj) out.emplace_back(bi, bj);
  return out;
}

void TiledMatrix::mirror_diagonal_tiles() {
  for (Index b = 0; b < blocks_; ++b) {
    auto& t = tile(b, b);
    t.triangularView<Eigen::StrictlyLower>() = t.transpose();
  }
}

// -----------------------------------------------------------------------------

TallMatrix::TallMatrix(Index rows, Index cols, Index panel_rows)
    : values_(Eigen::MatrixXd::Zero(rows, cols)), panel_rows_(panel_rows) {
  if (panel_rows < 1) throw InvalidArgument("panel size must be positive");
}

TallMatrix::TallMatrix(Eigen::MatrixXd values, Index panel_rows)
    : values_(std::move(values)), panel_rows_(panel_rows) {
  if (panel_rows < 1) throw InvalidArgument("panel size must be positive");
}

Index TallMatrix::panel_count() const { return (rows() + panel_rows_ - 1) / panel_rows_; }

Index TallMatrix::panel_extent(Index p) const {
  return std::min(panel_rows_, rows() - p * panel_rows_);
}

// -----------------------------------------------------------------------------

TiledMatrix empirical_covariance(const Ensemble& ensemble, Index tile_size) {
  const Index p = ensemble.size();
  if (p < 2) throw InvalidArgument("degenerate ensemble: covariance needs at least 2 members");
  const Eigen::MatrixXd& dev = ensemble.deviations();
  const double scale = 1.0 / static_cast<double>(p - 1);
  return TiledMatrix::generate(ensemble.dim(), tile_size,
                               [&](Index r0, Index c0, Eigen::MatrixXd& out) {
                                 out.noalias() = dev.middleRows(r0, out.rows()) *
                                                 dev.middleRows(c0, out.cols()).transpose();
                                 out *= scale;
                               });
}

namespace {

void check_same_dim(const TiledMatrix& a, const TiledMatrix& b) {
  if (a.dim() != b.dim())
    throw InvalidArgument("schur_product: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()) + ")");
}

void multiply_tiles_inplace(TiledMatrix& a, const TiledMatrix& b) {
  const auto blocks = a.stored_blocks();
  const auto count = static_cast<std::int64_t>(blocks.size());
  const bool same_tiling = a.tile_size() == b.tile_size();
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < count; ++t) {
    const auto [bi, bj] = blocks[static_cast<std::size_t>(t)];
    auto& out = a.tile(bi, bj);
    if (same_tiling) {
      out.array() *= b.tile(bi, bj).array();
    } else {
      const Index r0 = a.block_begin(bi), c0 = a.block_begin(bj);
      for (Index c = 0; c < out.cols(); ++c)
        for (Index r = 0; r < out.rows(); ++r) out(r, c) *= b(r0 + r, c0 + c);
    }
  }
}

}  // namespace

TiledMatrix schur_product(const TiledMatrix& a, const TiledMatrix& b) {
  check_same_dim(a, b);
  TiledMatrix out = a;
  multiply_tiles_inplace(out, b);
  return out;
}

TiledMatrix schur_product(TiledMatrix&& a, const TiledMatrix& b) {
  check_same_dim(a, b);
  multiply_tiles_inplace(a, b);
  return std::move(a);
}

TallMatrix extract_columns(const TiledMatrix& a, std::span<const Index> indices) {
  for (const Index j : indices)
    if (j < 0 || j >= a.dim())
      throw InvalidArgument("extract_columns: index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(a.dim()) + ")");
  const auto k = static_cast<Index>(indices.size());
  TallMatrix out(a.dim(), k, a.tile_size());
  const auto panels = static_cast<std::int64_t>(a.block_count());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t pi = 0; pi < panels; ++pi) {
    const Index bi = static_cast<Index>(pi);
    auto panel = out.panel(bi);
    for (Index c = 0; c < k; ++c) {
      const Index j = indices[static_cast<std::size_t>(c)];
      const Index bj = a.block_of(j);
      const Index local = j - a.block_begin(bj);
      if (bi <= bj)
        panel.col(c) = a.tile(bi, bj).col(local);
      else
        panel.col(c) = a.tile(bj, bi).row(local).transpose();
    }
  }
  return out;
}

TallMatrix multiply_tall(const TiledMatrix& a, const TallMatrix& x) {
  if (a.dim() != x.rows())
    throw InvalidArgument("multiply_tall: matrix is " + std::to_string(a.dim()) + "x" +
                          std::to_string(a.dim()) + " but operand has " + std::to_string(x.rows()) +
                          " rows");
  const Index blocks = a.block_count();
  TallMatrix out(a.dim(), x.cols(), a.tile_size());
  if (x.cols() == 0) return out;
  const auto panels = static_cast<std::int64_t>(blocks);
  // Each output panel is owned by one task and accumulated over column blocks
  // in increasing order, so the result does not depend on scheduling.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t pi = 0; pi < panels; ++pi) {
    const Index bi = static_cast<Index>(pi);
    auto acc = out.panel(bi);
    for (Index bj = 0; bj < blocks; ++bj) {
      const auto rhs = x.matrix().middleRows(a.block_begin(bj), a.block_extent(bj));
      if (bi <= bj)
        acc.noalias() += a.tile(bi, bj) * rhs;
      else
        acc.noalias() += a.tile(bj, bi).transpose() * rhs;
    }
  }
  return out;
}

}  // namespace enkf
