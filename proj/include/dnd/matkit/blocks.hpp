#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dnd/errors.hpp"
#include "dnd/matkit/dense_matrix.hpp"

namespace dnd::mat {

// Grid of optional blocks; an empty slot is a zero block.
using BlockGrid = std::vector<std::vector<std::optional<DenseMatrix>>>;

// Places every block at its cumulative row/column offset. Block-row heights and block-column
// widths are inferred from the blocks present; pass `row_sizes`/`col_sizes` when an entire
// block row or column is empty.
inline DenseMatrix frob_block_assemble(const BlockGrid& grid, std::vector<std::size_t> row_sizes = {},
                                       std::vector<std::size_t> col_sizes = {}) {
  using dnd::detail::require;
  const std::size_t br = grid.size();
  require(br > 0, "frob_block_assemble: empty grid");
  const std::size_t bc = grid.front().size();
  for (const auto& row : grid) require(row.size() == bc, "frob_block_assemble: ragged block grid");

  constexpr std::size_t unknown = static_cast<std::size_t>(-1);
  if (row_sizes.empty()) row_sizes.assign(br, unknown);
  if (col_sizes.empty()) col_sizes.assign(bc, unknown);
  require(row_sizes.size() == br && col_sizes.size() == bc,
          "frob_block_assemble: size hints do not match grid shape");

  for (std::size_t i = 0; i < br; ++i)
    for (std::size_t j = 0; j < bc; ++j) {
      if (!grid[i][j]) continue;
      const DenseMatrix& b = *grid[i][j];
      auto fit = [&](std::size_t& slot, std::size_t actual, const char* what) {
        if (slot == unknown) slot = actual;
        require(slot == actual, std::string("frob_block_assemble: inconsistent block ") + what +
                                    " at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      };
      fit(row_sizes[i], b.rows(), "height");
      fit(col_sizes[j], b.cols(), "width");
    }
  for (std::size_t s : row_sizes) require(s != unknown, "frob_block_assemble: block row size undetermined");
  for (std::size_t s : col_sizes) require(s != unknown, "frob_block_assemble: block column size undetermined");

  std::size_t rows = 0, cols = 0;
  for (std::size_t s : row_sizes) rows += s;
  for (std::size_t s : col_sizes) cols += s;

  DenseMatrix out(rows, cols);
  std::size_t r0 = 0;
  for (std::size_t i = 0; i < br; ++i) {
    std::size_t c0 = 0;
    for (std::size_t j = 0; j < bc; ++j) {
      if (grid[i][j]) {
        const DenseMatrix& b = *grid[i][j];
        for (std::size_t r = 0; r < b.rows(); ++r)
          for (std::size_t c = 0; c < b.cols(); ++c) out(r0 + r, c0 + c) = b(r, c);
      }
      c0 += col_sizes[j];
    }
    r0 += row_sizes[i];
  }
  return out;
}

// Copies the sub-block starting at (r0, c0) of the given extent.
inline DenseMatrix block(const DenseMatrix& a, std::size_t r0, std::size_t c0, std::size_t rows,
                         std::size_t cols) {
  dnd::detail::require(r0 + rows <= a.rows() && c0 + cols <= a.cols(), "block: out of range");
  DenseMatrix b(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) b(r, c) = a(r0 + r, c0 + c);
  return b;
}

// a[r0.., c0..] += b
inline void add_block(DenseMatrix& a, std::size_t r0, std::size_t c0, const DenseMatrix& b) {
  dnd::detail::require(r0 + b.rows() <= a.rows() && c0 + b.cols() <= a.cols(), "add_block: out of range");
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) a(r0 + r, c0 + c) += b(r, c);
}

}  // namespace dnd::mat
