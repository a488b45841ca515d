#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

namespace gridforge {

/// Globally unique cell identifier. Encodes refinement level and position.
using CellId = std::uint64_t;

/// Reserved id: never names a cell.
inline constexpr CellId error_cell = 0;

/// Position in the finest-resolution index lattice.
struct Indices {
	std::array<std::uint64_t, 3> v{};

	std::uint64_t& operator[](std::size_t dim) { return v[dim]; }
	std::uint64_t operator[](std::size_t dim) const { return v[dim]; }

	friend auto operator<=>(const Indices&, const Indices&) = default;
};

/// Unwrapped signed position; may lie outside the grid before wrapping.
using RawIndices = std::array<std::int64_t, 3>;

/*!
Immutable description of the grid's id space.

Level 0 holds n_x*n_y*n_z cells, every level l holds 8^l times as many.
Ids run consecutively level after level starting at 1, and within a level
increase first in x, then y, then z. Cell indices live in the lattice of
the finest level, so a level-l cell spans 2^(L-l) indices per dimension
and is located at the corner closest to the origin.
*/
class Topology {
public:
	/// Throws std::invalid_argument for empty dimensions and std::overflow_error
	/// when the total number of ids does not fit 64 bits.
	Topology(std::array<std::uint64_t, 3> level0_cells, int max_refinement_level,
	         std::array<bool, 3> periodic = {false, false, false});

	const std::array<std::uint64_t, 3>& level0_cells() const noexcept { return level0_; }
	int max_refinement_level() const noexcept { return max_level_; }
	const std::array<bool, 3>& periodic() const noexcept { return periodic_; }
	bool is_periodic(std::size_t dim) const noexcept { return periodic_[dim]; }

	/// Number of indices per dimension: 2^L * n_i.
	std::uint64_t index_extent(std::size_t dim) const noexcept { return extent_[dim]; }

	/// Indices spanned per dimension by a cell of the given level.
	std::uint64_t cell_size_in_indices(int level) const;

	std::uint64_t cells_on_level(int level) const;
	CellId level_start(int level) const;
	CellId max_cell_id() const noexcept { return last_id_; }

	bool is_valid(CellId id) const noexcept { return id != error_cell && id <= last_id_; }

	int level_of(CellId id) const;
	Indices indices_of(CellId id) const;

	/// Throws std::invalid_argument for indices not aligned to the level's
	/// lattice and std::out_of_range for indices outside the grid.
	CellId id_from(int level, const Indices& indices) const;

	/// Like id_from but returns error_cell instead of throwing.
	CellId try_id_from(int level, const Indices& indices) const noexcept;

	/// The 8 children in ascending id order; empty at the maximum level.
	std::vector<CellId> children_of(CellId id) const;
	std::optional<CellId> parent_of(CellId id) const;
	/// Children of the parent, including the cell itself; empty at level 0.
	std::vector<CellId> siblings_of(CellId id) const;

	/// Wraps periodic dimensions; nullopt when outside a non-periodic one.
	std::optional<Indices> wrap_indices(const RawIndices& raw) const noexcept;

	friend bool operator==(const Topology&, const Topology&) = default;

private:
	void require_valid(CellId id) const;

	std::array<std::uint64_t, 3> level0_;
	int max_level_;
	std::array<bool, 3> periodic_;
	std::array<std::uint64_t, 3> extent_{};
	std::vector<CellId> level_starts_; // one per level
	CellId last_id_ = 0;
};

} // namespace gridforge
