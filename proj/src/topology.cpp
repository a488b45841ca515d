#include "gridforge/topology.hpp"

#include <stdexcept>
#include <string>

namespace gridforge {

namespace {

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out)
{
	return !__builtin_mul_overflow(a, b, &out);
}

bool checked_add(std::uint64_t a, std::uint64_t b, std::uint64_t& out)
{
	return !__builtin_add_overflow(a, b, &out);
}

} // namespace

Topology::Topology(std::array<std::uint64_t, 3> level0_cells, int max_refinement_level,
                   std::array<bool, 3> periodic)
	: level0_(level0_cells), max_level_(max_refinement_level), periodic_(periodic)
{
	for (auto n : level0_) {
		if (n == 0) {
			throw std::invalid_argument("topology: every dimension needs at least one cell");
		}
	}
	if (max_level_ < 0 || max_level_ > 62) {
		throw std::invalid_argument("topology: maximum refinement level out of range");
	}

	const std::uint64_t finest = std::uint64_t{1} << max_level_;
	for (std::size_t d = 0; d < 3; ++d) {
		if (!checked_mul(level0_[d], finest, extent_[d])) {
			throw std::overflow_error("topology: index range does not fit 64 bits");
		}
	}

	std::uint64_t level0_total = 0;
	if (!checked_mul(level0_[0], level0_[1], level0_total)
	    || !checked_mul(level0_total, level0_[2], level0_total)) {
		throw std::overflow_error("topology: level 0 cell count does not fit 64 bits");
	}

	level_starts_.reserve(static_cast<std::size_t>(max_level_) + 1);
	std::uint64_t next = 1;
	std::uint64_t on_level = level0_total;
	for (int level = 0; level <= max_level_; ++level) {
		level_starts_.push_back(next);
		std::uint64_t last = 0;
		if (!checked_add(next - 1, on_level, last)) {
			throw std::overflow_error("topology: total cell id count does not fit 64 bits");
		}
		last_id_ = last;
		if (level < max_level_) {
			if (!checked_add(last, 1, next) || !checked_mul(on_level, 8, on_level)) {
				throw std::overflow_error("topology: total cell id count does not fit 64 bits");
			}
		}
	}
}

std::uint64_t Topology::cell_size_in_indices(int level) const
{
	if (level < 0 || level > max_level_) {
		throw std::out_of_range("topology: refinement level out of range");
	}
	return std::uint64_t{1} << (max_level_ - level);
}

std::uint64_t Topology::cells_on_level(int level) const
{
	if (level < 0 || level > max_level_) {
		throw std::out_of_range("topology: refinement level out of range");
	}
	const CellId end = level == max_level_ ? last_id_ + 1 : level_starts_[level + 1];
	return end - level_starts_[level];
}

CellId Topology::level_start(int level) const
{
	if (level < 0 || level > max_level_) {
		throw std::out_of_range("topology: refinement level out of range");
	}
	return level_starts_[level];
}

void Topology::require_valid(CellId id) const
{
	if (!is_valid(id)) {
		throw std::out_of_range("topology: invalid cell id " + std::to_string(id));
	}
}

int Topology::level_of(CellId id) const
{
	require_valid(id);
	int level = max_level_;
	while (level_starts_[level] > id) {
		--level;
	}
	return level;
}

Indices Topology::indices_of(CellId id) const
{
	const int level = level_of(id);
	const std::uint64_t nx = level0_[0] << level;
	const std::uint64_t ny = level0_[1] << level;
	const int shift = max_level_ - level;

	std::uint64_t ordinal = id - level_starts_[level];
	Indices result;
	result[0] = (ordinal % nx) << shift;
	ordinal /= nx;
	result[1] = (ordinal % ny) << shift;
	result[2] = (ordinal / ny) << shift;
	return result;
}

CellId Topology::try_id_from(int level, const Indices& indices) const noexcept
{
	if (level < 0 || level > max_level_) {
		return error_cell;
	}
	const int shift = max_level_ - level;
	const std::uint64_t mask = (std::uint64_t{1} << shift) - 1;
	for (std::size_t d = 0; d < 3; ++d) {
		if (indices[d] >= extent_[d] || (indices[d] & mask) != 0) {
			return error_cell;
		}
	}
	const std::uint64_t nx = level0_[0] << level;
	const std::uint64_t ny = level0_[1] << level;
	return level_starts_[level] + (indices[0] >> shift) + nx * ((indices[1] >> shift) + ny * (indices[2] >> shift));
}

CellId Topology::id_from(int level, const Indices& indices) const
{
	if (level < 0 || level > max_level_) {
		throw std::out_of_range("topology: refinement level out of range");
	}
	const std::uint64_t size = cell_size_in_indices(level);
	for (std::size_t d = 0; d < 3; ++d) {
		if (indices[d] >= extent_[d]) {
			throw std::out_of_range("topology: indices outside the grid");
		}
		if (indices[d] % size != 0) {
			throw std::invalid_argument("topology: indices not aligned to the level's lattice");
		}
	}
	return try_id_from(level, indices);
}

std::vector<CellId> Topology::children_of(CellId id) const
{
	const int level = level_of(id);
	if (level == max_level_) {
		return {};
	}
	const Indices corner = indices_of(id);
	const std::uint64_t half = cell_size_in_indices(level + 1);

	std::vector<CellId> children;
	children.reserve(8);
	// z outermost, x innermost: ascending id order
	for (std::uint64_t z = 0; z < 2; ++z) {
		for (std::uint64_t y = 0; y < 2; ++y) {
			for (std::uint64_t x = 0; x < 2; ++x) {
				Indices child{{corner[0] + x * half, corner[1] + y * half, corner[2] + z * half}};
				children.push_back(try_id_from(level + 1, child));
			}
		}
	}
	return children;
}

std::optional<CellId> Topology::parent_of(CellId id) const
{
	const int level = level_of(id);
	if (level == 0) {
		return std::nullopt;
	}
	const std::uint64_t parent_mask = cell_size_in_indices(level - 1) - 1;
	Indices corner = indices_of(id);
	for (std::size_t d = 0; d < 3; ++d) {
		corner[d] &= ~parent_mask;
	}
	return try_id_from(level - 1, corner);
}

std::vector<CellId> Topology::siblings_of(CellId id) const
{
	const auto parent = parent_of(id);
	if (!parent) {
		return {};
	}
	return children_of(*parent);
}

std::optional<Indices> Topology::wrap_indices(const RawIndices& raw) const noexcept
{
	Indices result;
	for (std::size_t d = 0; d < 3; ++d) {
		const auto extent = static_cast<std::int64_t>(extent_[d]);
		std::int64_t value = raw[d];
		if (value < 0 || value >= extent) {
			if (!periodic_[d]) {
				return std::nullopt;
			}
			value %= extent;
			if (value < 0) {
				value += extent;
			}
		}
		result[d] = static_cast<std::uint64_t>(value);
	}
	return result;
}

} // namespace gridforge
