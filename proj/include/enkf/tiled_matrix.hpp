#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "enkf/ensemble.hpp"

namespace enkf {

inline constexpr Index kDefaultTileSize = 1024;

/// Process-wide counters of live dense tiles. Used by tests to bound the
/// working set of covariance construction.
namespace tile_stats {
std::int64_t live();
std::int64_t peak();
/// Sets the peak to the current live count.
void reset_peak();
}  // namespace tile_stats

/// One dense block of a tiled matrix. Copies and destructions are tracked by
/// tile_stats; a moved-from tile no longer counts as live.
class Tile {
 public:
  Tile() = default;
  Tile(Index rows, Index cols);
  Tile(const Tile& other);
  Tile(Tile&& other) noexcept;
  Tile& operator=(const Tile& other);
  Tile& operator=(Tile&& other) noexcept;
  ~Tile();

  Eigen::MatrixXd& data() { return data_; }
  const Eigen::MatrixXd& data() const { return data_; }

 private:
  void release();

  Eigen::MatrixXd data_;
  bool counted_ = false;
};

/// Symmetric m x m matrix stored as a grid of tiles. Only blocks with
/// block_row <= block_col are held; edge tiles are truncated to the matrix.
class TiledMatrix {
 public:
  TiledMatrix() = default;
  /// Zero matrix.
  TiledMatrix(Index dim, Index tile_size);

  /// Builds the matrix tile-parallel. `fill(row0, col0, out)` must write the
  /// entries [row0, row0 + out.rows()) x [col0, col0 + out.cols()) into `out`.
  /// Diagonal tiles are mirrored from their upper triangle afterwards, so the
  /// result is exactly symmetric even if `fill` is not.
  template <class Fill>
  static TiledMatrix generate(Index dim, Index tile_size, Fill&& fill);

  /// Tiles a dense symmetric matrix (upper triangle is read). Small inputs only.
  static TiledMatrix from_dense(const Eigen::MatrixXd& dense, Index tile_size);

  Index dim() const { return dim_; }
  Index tile_size() const { return tile_size_; }
  /// Number of tile rows (and columns) in the grid.
  Index block_count() const { return blocks_; }
  Index stored_tile_count() const { return static_cast<Index>(tiles_.size()); }

  Index block_begin(Index block) const { return block * tile_size_; }
  Index block_extent(Index block) const;
  Index block_of(Index i) const { return i / tile_size_; }

  /// Tile (block_row, block_col) with block_row <= block_col.
  Eigen::MatrixXd& tile(Index block_row, Index block_col);
  const Eigen::MatrixXd& tile(Index block_row, Index block_col) const;

  /// Entry (i, j); for i > j this reads the mirrored stored entry.
  double operator()(Index i, Index j) const;

  bool all_finite() const;

  Eigen::MatrixXd to_dense() const;

  /// Sequence of stored (block_row, block_col) pairs in storage order.
  std::vector<std::pair<Index, Index>> stored_blocks() const;

 private:
  std::size_t slot(Index block_row, Index block_col) const;
  void mirror_diagonal_tiles();

  Index dim_ = 0;
  Index tile_size_ = kDefaultTileSize;
  Index blocks_ = 0;
  std::vector<Tile> tiles_;
};

/// Dense tall m x k matrix (k much smaller than m), column-major, viewed as
/// row panels of `panel_rows` rows.
class TallMatrix {
 public:
  TallMatrix() = default;
  TallMatrix(Index rows, Index cols, Index panel_rows);
  TallMatrix(Eigen::MatrixXd values, Index panel_rows);

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  Index panel_rows() const { return panel_rows_; }
  Index panel_count() const;

  auto panel(Index p) { return values_.middleRows(p * panel_rows_, panel_extent(p)); }
  auto panel(Index p) const { return values_.middleRows(p * panel_rows_, panel_extent(p)); }
  Index panel_extent(Index p) const;

  Eigen::MatrixXd& matrix() { return values_; }
  const Eigen::MatrixXd& matrix() const { return values_; }

 private:
  Eigen::MatrixXd values_;
  Index panel_rows_ = kDefaultTileSize;
};

/// (1/(p-1)) sum_i psi'_i psi'_i^T, built tile by tile from the deviations.
TiledMatrix empirical_covariance(const Ensemble& ensemble, Index tile_size = kDefaultTileSize);

/// Entrywise product. If tile sizes differ, `b` is read entrywise in `a`'s tiling.
TiledMatrix schur_product(const TiledMatrix& a, const TiledMatrix& b);
/// In-place variant: reuses the tiles of `a`, allocating no new tiles.
TiledMatrix schur_product(TiledMatrix&& a, const TiledMatrix& b);

/// Columns `indices` of `a` as an m x k tall matrix. Duplicates are allowed.
TallMatrix extract_columns(const TiledMatrix& a, std::span<const Index> indices);

/// a * x with a fixed per-panel reduction order (bitwise reproducible across
/// thread counts).
TallMatrix multiply_tall(const TiledMatrix& a, const TallMatrix& x);

// ---------------------------------------------------------------------------

template <class Fill>
TiledMatrix TiledMatrix::generate(Index dim, Index tile_size, Fill&& fill) {
  TiledMatrix out(dim, tile_size);
  const auto blocks = out.stored_blocks();
  const auto count = static_cast<std::int64_t>(blocks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < count; ++t) {
    const auto [bi, bj] = blocks[static_cast<std::size_t>(t)];
    fill(out.block_begin(bi), out.block_begin(bj), out.tile(bi, bj));
  }
  out.mirror_diagonal_tiles();
  return out;
}

}  // namespace enkf
