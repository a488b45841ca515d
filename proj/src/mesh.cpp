#include "gridforge/mesh.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

namespace gridforge {

NoSuchCell::NoSuchCell(CellId id) : std::out_of_range("cell " + std::to_string(id) + " does not exist"), cell_(id) {}

NotLocal::NotLocal(CellId id) : std::logic_error("cell " + std::to_string(id) + " is not local") {}

namespace {

void sort_unique(std::vector<CellId>& ids)
{
	std::sort(ids.begin(), ids.end());
	ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
}

std::uint64_t splitmix64(std::uint64_t x)
{
	x += 0x9E3779B97F4A7C15ull;
	x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
	x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
	return x ^ (x >> 31);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
	std::int64_t q = a / b;
	if ((a % b != 0) && ((a < 0) != (b < 0))) {
		--q;
	}
	return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

/// Closed intervals [a_lo, a_hi] and [b_lo, b_hi] overlap, modulo `extent` when periodic.
bool intervals_overlap(std::int64_t a_lo, std::int64_t a_hi, std::int64_t b_lo, std::int64_t b_hi, bool periodic,
                       std::int64_t extent)
{
	if (!periodic) {
		return a_lo <= b_hi && b_lo <= a_hi;
	}
	// some shift k * extent of b overlaps a
	return floor_div(a_hi - b_lo, extent) >= ceil_div(a_lo - b_hi, extent);
}

[[noreturn]] void balance_violation(CellId id, const char* detail)
{
	throw std::logic_error("refinement level difference above one next to cell " + std::to_string(id) + ": "
	                       + detail);
}

} // namespace

bool in_box_neighborhood(const Topology& topology, unsigned neighborhood_size, CellId a, CellId b)
{
	if (a == b) {
		return false;
	}
	const Indices ia = topology.indices_of(a);
	const Indices ib = topology.indices_of(b);
	const auto sa = static_cast<std::int64_t>(topology.cell_size_in_indices(topology.level_of(a)));
	const auto sb = static_cast<std::int64_t>(topology.cell_size_in_indices(topology.level_of(b)));
	const std::int64_t reach = static_cast<std::int64_t>(neighborhood_size) * sa;
	for (std::size_t d = 0; d < 3; ++d) {
		const auto a_lo = static_cast<std::int64_t>(ia[d]) - reach;
		const auto a_hi = static_cast<std::int64_t>(ia[d]) + sa - 1 + reach;
		const auto b_lo = static_cast<std::int64_t>(ib[d]);
		if (!intervals_overlap(a_lo, a_hi, b_lo, b_lo + sb - 1, topology.is_periodic(d),
		                       static_cast<std::int64_t>(topology.index_extent(d)))) {
			return false;
		}
	}
	return true;
}

bool faces_touch(const Topology& topology, CellId a, CellId b)
{
	if (a == b) {
		return false;
	}
	const Indices ia = topology.indices_of(a);
	const Indices ib = topology.indices_of(b);
	const auto sa = static_cast<std::int64_t>(topology.cell_size_in_indices(topology.level_of(a)));
	const auto sb = static_cast<std::int64_t>(topology.cell_size_in_indices(topology.level_of(b)));

	std::array<bool, 3> overlap{};
	std::array<bool, 3> touch{};
	for (std::size_t d = 0; d < 3; ++d) {
		const auto extent = static_cast<std::int64_t>(topology.index_extent(d));
		const bool periodic = topology.is_periodic(d);
		const auto a_lo = static_cast<std::int64_t>(ia[d]);
		const auto b_lo = static_cast<std::int64_t>(ib[d]);
		const std::int64_t a_end = a_lo + sa;
		const std::int64_t b_end = b_lo + sb;
		overlap[d] = intervals_overlap(a_lo, a_end - 1, b_lo, b_end - 1, periodic, extent);
		if (periodic) {
			touch[d] = (a_end % extent == b_lo) || (b_end % extent == a_lo);
		} else {
			touch[d] = a_end == b_lo || b_end == a_lo;
		}
	}
	for (std::size_t d = 0; d < 3; ++d) {
		if (touch[d] && overlap[(d + 1) % 3] && overlap[(d + 2) % 3]) {
			return true;
		}
	}
	return false;
}

Mesh::Mesh(Topology topology, unsigned neighborhood_size, int rank, int rank_count)
	: topology_(std::move(topology)), neighborhood_size_(neighborhood_size), rank_(rank), rank_count_(rank_count),
	  level_counts_(static_cast<std::size_t>(topology_.max_refinement_level()) + 1, 0)
{
	if (rank_count_ < 1) {
		throw std::invalid_argument("mesh: need at least one rank");
	}
	if (rank_ < 0 || rank_ >= rank_count_) {
		throw std::invalid_argument("mesh: rank out of range");
	}
}

int Mesh::owner_of(CellId id) const
{
	const auto it = cells_.find(id);
	if (it == cells_.end()) {
		throw NoSuchCell(id);
	}
	return it->second;
}

std::vector<CellId> Mesh::all_cells() const
{
	std::vector<CellId> ids;
	ids.reserve(cells_.size());
	for (const auto& [id, owner] : cells_) {
		ids.push_back(id);
	}
	std::sort(ids.begin(), ids.end());
	return ids;
}

std::vector<std::size_t> Mesh::local_cell_counts() const
{
	return owner_counts_;
}

std::optional<CellId> Mesh::find_smallest_existing(const Indices& indices) const
{
	for (int level = topology_.max_refinement_level(); level >= 0; --level) {
		const std::uint64_t size = topology_.cell_size_in_indices(level);
		Indices corner = indices;
		for (std::size_t d = 0; d < 3; ++d) {
			corner[d] &= ~(size - 1);
		}
		const CellId id = topology_.try_id_from(level, corner);
		if (id != error_cell && exists(id)) {
			return id;
		}
	}
	return std::nullopt;
}

std::vector<CellId> Mesh::search_neighbors(CellId id) const
{
	if (!exists(id)) {
		throw NoSuchCell(id);
	}
	return neighborhood_size_ == 0 ? face_neighbors(id) : search_box_neighbors(id);
}

std::vector<CellId> Mesh::search_box_neighbors(CellId id) const
{
	const int level = topology_.level_of(id);
	const int max_level = topology_.max_refinement_level();
	const Indices self = topology_.indices_of(id);
	const auto size = static_cast<std::int64_t>(topology_.cell_size_in_indices(level));
	const auto reach = static_cast<std::int64_t>(neighborhood_size_);

	std::vector<CellId> found;
	found.reserve(static_cast<std::size_t>((2 * reach + 1) * (2 * reach + 1) * (2 * reach + 1)));

	RawIndices raw;
	for (std::int64_t z = -reach; z <= reach; ++z) {
		raw[2] = static_cast<std::int64_t>(self[2]) + z * size;
		for (std::int64_t y = -reach; y <= reach; ++y) {
			raw[1] = static_cast<std::int64_t>(self[1]) + y * size;
			for (std::int64_t x = -reach; x <= reach; ++x) {
				raw[0] = static_cast<std::int64_t>(self[0]) + x * size;
				const auto position = topology_.wrap_indices(raw);
				if (!position || *position == self) {
					continue;
				}
				const CellId same = topology_.try_id_from(level, *position);
				if (exists(same)) {
					found.push_back(same);
					continue;
				}
				if (level > 0) {
					Indices corner = *position;
					for (std::size_t d = 0; d < 3; ++d) {
						corner[d] &= ~(static_cast<std::uint64_t>(2 * size) - 1);
					}
					const CellId coarse = topology_.try_id_from(level - 1, corner);
					if (exists(coarse)) {
						found.push_back(coarse);
						continue;
					}
				}
				if (level == max_level) {
					balance_violation(id, "no cell of an admissible level covers a neighboring position");
				}
				for (const CellId child : topology_.children_of(same)) {
					if (!exists(child)) {
						balance_violation(id, "neighboring cell refined by two levels");
					}
					found.push_back(child);
				}
			}
		}
	}
	sort_unique(found);
	return found;
}

std::vector<CellId> Mesh::face_neighbors_toward(CellId id, std::size_t d, std::int64_t direction,
                                               RawIndices& shift) const
{
	const int level = topology_.level_of(id);
	const Indices self = topology_.indices_of(id);
	const auto size = static_cast<std::int64_t>(topology_.cell_size_in_indices(level));

	RawIndices raw{static_cast<std::int64_t>(self[0]), static_cast<std::int64_t>(self[1]),
	               static_cast<std::int64_t>(self[2])};
	raw[d] += direction * size;
	const auto position = topology_.wrap_indices(raw);
	if (!position || *position == self) {
		return {};
	}
	for (std::size_t k = 0; k < 3; ++k) {
		shift[k] = raw[k] - static_cast<std::int64_t>((*position)[k]);
	}
	const CellId same = topology_.try_id_from(level, *position);
	if (exists(same)) {
		return {same};
	}
	if (level > 0) {
		Indices corner = *position;
		for (std::size_t k = 0; k < 3; ++k) {
			corner[k] &= ~(static_cast<std::uint64_t>(2 * size) - 1);
		}
		const CellId coarse = topology_.try_id_from(level - 1, corner);
		if (exists(coarse)) {
			return {coarse};
		}
	}
	if (level == topology_.max_refinement_level()) {
		balance_violation(id, "no face neighbor of an admissible level");
	}
	// children facing this cell have offset 0 on the + side, 1 on the - side
	const std::size_t facing_bit = direction > 0 ? 0 : 1;
	const auto children = topology_.children_of(same);
	std::vector<CellId> found;
	for (std::size_t k = 0; k < children.size(); ++k) {
		const bool facing = ((k >> d) & 1u) == facing_bit;
		if (exists(children[k])) {
			found.push_back(children[k]);
		} else if (facing) {
			balance_violation(id, "face neighbor refined by two levels");
		}
	}
	return found;
}

std::vector<CellId> Mesh::face_neighbors(CellId id) const
{
	std::vector<CellId> found;
	RawIndices shift{};
	for (std::size_t d = 0; d < 3; ++d) {
		for (const std::int64_t direction : {-1, +1}) {
			const auto side = face_neighbors_toward(id, d, direction, shift);
			found.insert(found.end(), side.begin(), side.end());
		}
	}
	sort_unique(found);
	return found;
}

std::vector<NeighborImage> Mesh::neighbor_images(CellId id) const
{
	if (!exists(id)) {
		throw NoSuchCell(id);
	}
	const Indices self = topology_.indices_of(id);
	std::vector<NeighborImage> images;

	if (neighborhood_size_ == 0) {
		RawIndices shift{};
		for (std::size_t d = 0; d < 3; ++d) {
			for (const std::int64_t direction : {-1, +1}) {
				for (const CellId other : face_neighbors_toward(id, d, direction, shift)) {
					const Indices corner = topology_.indices_of(other);
					NeighborImage image{other, {}};
					for (std::size_t k = 0; k < 3; ++k) {
						image.offset[k] = static_cast<std::int64_t>(corner[k]) + shift[k]
						                  - static_cast<std::int64_t>(self[k]);
					}
					images.push_back(image);
				}
			}
		}
		std::sort(images.begin(), images.end());
		return images;
	}

	const auto size = static_cast<std::int64_t>(topology_.cell_size_in_indices(topology_.level_of(id)));
	const std::int64_t reach = static_cast<std::int64_t>(neighborhood_size_) * size;
	std::vector<CellId> candidates = search_box_neighbors(id);
	candidates.push_back(id);
	for (const CellId other : candidates) {
		const Indices corner = topology_.indices_of(other);
		const auto other_size = static_cast<std::int64_t>(topology_.cell_size_in_indices(topology_.level_of(other)));
		// per dimension, every offset of an image of `other` overlapping the window
		std::array<std::vector<std::int64_t>, 3> offsets;
		for (std::size_t d = 0; d < 3; ++d) {
			const std::int64_t lo = -reach;
			const std::int64_t hi = size + reach; // exclusive
			const std::int64_t base = static_cast<std::int64_t>(corner[d]) - static_cast<std::int64_t>(self[d]);
			if (!topology_.is_periodic(d)) {
				if (base < hi && base + other_size > lo) {
					offsets[d].push_back(base);
				}
				continue;
			}
			const auto extent = static_cast<std::int64_t>(topology_.index_extent(d));
			const std::int64_t first = ceil_div(lo - other_size + 1 - base, extent);
			const std::int64_t last = floor_div(hi - 1 - base, extent);
			for (std::int64_t k = first; k <= last; ++k) {
				offsets[d].push_back(base + k * extent);
			}
		}
		for (const auto z : offsets[2]) {
			for (const auto y : offsets[1]) {
				for (const auto x : offsets[0]) {
					if (other == id && x == 0 && y == 0 && z == 0) {
						continue;
					}
					images.push_back({other, {x, y, z}});
				}
			}
		}
	}
	std::sort(images.begin(), images.end());
	return images;
}

std::vector<CellId> Mesh::cells_near(CellId id, std::uint64_t margin, int level) const
{
	const Indices self = topology_.indices_of(id);
	const auto own = static_cast<std::int64_t>(topology_.cell_size_in_indices(topology_.level_of(id)));
	const auto step = static_cast<std::int64_t>(topology_.cell_size_in_indices(level));
	const auto grow = static_cast<std::int64_t>(margin);

	std::array<std::int64_t, 3> first{};
	std::array<std::int64_t, 3> last{};
	for (std::size_t d = 0; d < 3; ++d) {
		const std::int64_t lo = static_cast<std::int64_t>(self[d]) - grow;
		const std::int64_t hi = static_cast<std::int64_t>(self[d]) + own - 1 + grow;
		first[d] = floor_div(lo, step) * step;
		last[d] = floor_div(hi, step) * step;
	}

	std::vector<CellId> found;
	RawIndices raw;
	for (raw[2] = first[2]; raw[2] <= last[2]; raw[2] += step) {
		for (raw[1] = first[1]; raw[1] <= last[1]; raw[1] += step) {
			for (raw[0] = first[0]; raw[0] <= last[0]; raw[0] += step) {
				const auto position = topology_.wrap_indices(raw);
				if (!position) {
					continue;
				}
				const CellId candidate = topology_.try_id_from(level, *position);
				if (exists(candidate)) {
					found.push_back(candidate);
				}
			}
		}
	}
	sort_unique(found);
	return found;
}

std::vector<CellId> Mesh::coarse_reaching_cells(CellId parent) const
{
	const int level = topology_.level_of(parent);
	if (level_counts_[static_cast<std::size_t>(level)] == 0) {
		return {};
	}
	// a coarse cell reaches at most 2n of its children's sizes, which is n of its own
	const std::uint64_t size = topology_.cell_size_in_indices(level);
	return cells_near(parent, size * std::max(1u, neighborhood_size_), level);
}

std::span<const CellId> Mesh::neighbors_of(CellId id) const
{
	const auto it = local_slot_.find(id);
	if (it == local_slot_.end()) {
		if (!exists(id)) {
			throw NoSuchCell(id);
		}
		throw NotLocal(id);
	}
	return neighbors_of_[it->second];
}

std::span<const CellId> Mesh::neighbors_to(CellId id) const
{
	const auto it = local_slot_.find(id);
	if (it == local_slot_.end()) {
		if (!exists(id)) {
			throw NoSuchCell(id);
		}
		throw NotLocal(id);
	}
	return neighbors_to_[it->second];
}

const CellClassification& Mesh::classify_cells() const noexcept
{
	return classes_;
}

void Mesh::assign(CellTable cells)
{
	for (const auto& [id, owner] : cells) {
		if (!topology_.is_valid(id)) {
			throw std::invalid_argument("mesh: invalid cell id " + std::to_string(id));
		}
		if (owner < 0 || owner >= rank_count_) {
			throw std::invalid_argument("mesh: owner out of range for cell " + std::to_string(id));
		}
	}
	cells_ = std::move(cells);
	rebuild();
}

void Mesh::set_owners(std::span<const std::pair<CellId, int>> changes)
{
	for (const auto& [id, owner] : changes) {
		const auto it = cells_.find(id);
		if (it == cells_.end()) {
			throw NoSuchCell(id);
		}
		if (owner < 0 || owner >= rank_count_) {
			throw std::invalid_argument("mesh: owner out of range for cell " + std::to_string(id));
		}
		it->second = owner;
	}
	rebuild();
}

void Mesh::apply_refinement(std::span<const CellId> refined, std::span<const CellId> unrefined)
{
	for (const CellId parent : refined) {
		const auto it = cells_.find(parent);
		if (it == cells_.end()) {
			throw NoSuchCell(parent);
		}
		if (topology_.level_of(parent) == topology_.max_refinement_level()) {
			throw std::logic_error("mesh: cell " + std::to_string(parent) + " is at the maximum refinement level");
		}
	}
	for (const CellId parent : unrefined) {
		for (const CellId child : topology_.children_of(parent)) {
			if (!exists(child)) {
				throw std::logic_error("mesh: cannot unrefine into " + std::to_string(parent) + ", child "
				                       + std::to_string(child) + " does not exist");
			}
		}
	}

	for (const CellId parent : refined) {
		const int owner = cells_.at(parent);
		cells_.erase(parent);
		for (const CellId child : topology_.children_of(parent)) {
			cells_.emplace(child, owner);
		}
	}
	for (const CellId parent : unrefined) {
		const auto children = topology_.children_of(parent);
		const int owner = cells_.at(children.front());
		for (const CellId child : children) {
			cells_.erase(child);
		}
		cells_.emplace(parent, owner);
	}
	rebuild();
}

std::uint64_t Mesh::content_hash() const
{
	std::uint64_t digest = splitmix64(cells_.size());
	for (const auto& [id, owner] : cells_) {
		digest += splitmix64(id * 0x100000001B3ull ^ static_cast<std::uint64_t>(owner));
	}
	return digest;
}

void Mesh::verify_balance() const
{
	for (const auto& [id, owner] : cells_) {
		const int level = topology_.level_of(id);
		for (const CellId other : search_neighbors(id)) {
			if (std::abs(topology_.level_of(other) - level) > 1) {
				balance_violation(id, ("neighbor " + std::to_string(other)).c_str());
			}
		}
	}
}

void Mesh::rebuild()
{
	++version_;
	std::fill(level_counts_.begin(), level_counts_.end(), 0);
	owner_counts_.assign(static_cast<std::size_t>(rank_count_), 0);
	local_.clear();
	for (const auto& [id, owner] : cells_) {
		++level_counts_[static_cast<std::size_t>(topology_.level_of(id))];
		++owner_counts_[static_cast<std::size_t>(owner)];
		if (owner == rank_) {
			local_.push_back(id);
		}
	}
	std::sort(local_.begin(), local_.end());
	local_slot_.clear();
	local_slot_.reserve(local_.size());
	for (std::size_t k = 0; k < local_.size(); ++k) {
		local_slot_.emplace(local_[k], k);
	}
	rebuild_arrows();
}

void Mesh::rebuild_arrows()
{
	neighbors_of_.assign(local_.size(), {});
	neighbors_to_.assign(local_.size(), {});

	for (std::size_t k = 0; k < local_.size(); ++k) {
		neighbors_of_[k] = search_neighbors(local_[k]);
	}

	// arrows between local cells
	std::vector<CellId> remote;
	for (std::size_t k = 0; k < local_.size(); ++k) {
		for (const CellId target : neighbors_of_[k]) {
			const auto slot = local_slot_.find(target);
			if (slot != local_slot_.end()) {
				neighbors_to_[slot->second].push_back(local_[k]);
			} else {
				remote.push_back(target);
			}
		}
	}

	// arrows from remote cells: their neighborhoods may reach local cells
	if (rank_count_ > 1) {
		// siblings share one search around their parent
		std::vector<CellId> parents;
		for (const CellId id : local_) {
			if (topology_.level_of(id) > 0) {
				parents.push_back(*topology_.parent_of(id));
			}
		}
		sort_unique(parents);
		for (const CellId parent : parents) {
			for (const CellId coarse : coarse_reaching_cells(parent)) {
				if (cells_.at(coarse) != rank_) {
					remote.push_back(coarse);
				}
			}
		}
		sort_unique(remote);
		for (const CellId source : remote) {
			for (const CellId target : search_neighbors(source)) {
				const auto slot = local_slot_.find(target);
				if (slot != local_slot_.end()) {
					neighbors_to_[slot->second].push_back(source);
				}
			}
		}
	}

	remote_neighbors_.clear();
	classes_.inner.clear();
	classes_.outer.clear();
	for (std::size_t k = 0; k < local_.size(); ++k) {
		sort_unique(neighbors_to_[k]);
		const std::size_t before = remote_neighbors_.size();
		for (const auto lists : {&neighbors_of_[k], &neighbors_to_[k]}) {
			for (const CellId other : *lists) {
				if (cells_.at(other) != rank_) {
					remote_neighbors_.push_back(other);
				}
			}
		}
		(remote_neighbors_.size() > before ? classes_.outer : classes_.inner).push_back(local_[k]);
	}
	sort_unique(remote_neighbors_);
}

} // namespace gridforge
