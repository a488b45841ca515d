#pragma once

#include "gridforge/topology.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace gridforge {

/// Thrown when a cell that does not exist is looked up.
class NoSuchCell : public std::out_of_range {
public:
	explicit NoSuchCell(CellId id);
	CellId cell() const noexcept { return cell_; }

private:
	CellId cell_;
};

/// Thrown when a per-local-cell query is made for a cell owned elsewhere.
class NotLocal : public std::logic_error {
public:
	explicit NotLocal(CellId id);
};

/// Existing cell -> owning rank. Replicated identically on every rank.
using CellTable = std::unordered_map<CellId, int>;

/// One periodic image of a neighbor: its corner relative to the cell's corner.
struct NeighborImage {
	CellId id = error_cell;
	RawIndices offset{};

	friend auto operator<=>(const NeighborImage&, const NeighborImage&) = default;
};

struct CellClassification {
	std::vector<CellId> inner; ///< local cells without remote neighbors
	std::vector<CellId> outer; ///< local cells with at least one remote neighbor
};

/*!
The grid graph as seen from one rank.

Holds the replicated cell -> owner table and, for local cells only, the arrow
lists: neighbors_of (cells this cell's neighborhood reaches) and neighbors_to
(cells whose neighborhood reaches this cell). Arrows are cell ids and are
simply rebuilt from the table after any structural change.

A neighborhood of size n >= 1 is measured in units of the cell's own size:
every cell intersecting the cell's box grown by n cell lengths on each side.
Size 0 selects face neighbors only.
*/
class Mesh {
public:
	Mesh(Topology topology, unsigned neighborhood_size, int rank, int rank_count);

	const Topology& topology() const noexcept { return topology_; }
	unsigned neighborhood_size() const noexcept { return neighborhood_size_; }
	int rank() const noexcept { return rank_; }
	int rank_count() const noexcept { return rank_count_; }

	bool exists(CellId id) const { return cells_.contains(id); }
	int owner_of(CellId id) const;
	bool is_local(CellId id) const { return owner_of(id) == rank_; }
	std::size_t cell_count() const noexcept { return cells_.size(); }
	const CellTable& cells() const noexcept { return cells_; }
	/// All existing cells, ascending.
	std::vector<CellId> all_cells() const;
	/// Local cells, ascending.
	std::span<const CellId> local_cells() const noexcept { return local_; }
	/// Number of existing cells per refinement level.
	std::size_t cells_on_level(int level) const { return level_counts_.at(static_cast<std::size_t>(level)); }
	/// Local cell count of every rank, derived from the replicated table.
	std::vector<std::size_t> local_cell_counts() const;

	/// The existing cell of greatest level covering the given indices.
	std::optional<CellId> find_smallest_existing(const Indices& indices) const;

	/// Neighbors of any existing cell computed from the table, ascending.
	std::vector<CellId> search_neighbors(CellId id) const;

	/*!
	Like search_neighbors but lists a cell once per periodic image inside the
	neighborhood, so a neighborhood wider than a periodic dimension sees the
	same cell (or the cell itself) more than once. Ascending by (id, offset).
	*/
	std::vector<NeighborImage> neighbor_images(CellId id) const;

	std::span<const CellId> neighbors_of(CellId id) const;
	std::span<const CellId> neighbors_to(CellId id) const;

	/// Computed with the arrow lists; both parts ascending.
	const CellClassification& classify_cells() const noexcept;

	/// Remote cells referenced by local arrow lists, ascending.
	std::span<const CellId> remote_neighbors() const noexcept { return remote_neighbors_; }

	/*!
	Replaces the whole table. Every rank must pass identical content.
	Arrow lists are rebuilt and the structure version advances.
	*/
	void assign(CellTable cells);

	/// Applies ownership changes; arrow lists are rebuilt.
	void set_owners(std::span<const std::pair<CellId, int>> changes);

	/*!
	Structural commit: each id in `refined` is replaced by its children (which
	inherit its owner), each id in `unrefined` (a parent) replaces its children
	and is owned by `owner_of(first child)`. Rebuilds arrow lists.
	*/
	void apply_refinement(std::span<const CellId> refined, std::span<const CellId> unrefined);

	/// Advances whenever cells are created, removed or change owner.
	std::uint64_t structure_version() const noexcept { return version_; }

	/// Order-independent digest of the table; equal on all ranks after a commit.
	std::uint64_t content_hash() const;

	/*!
	Checks every neighboring pair of existing cells for a refinement level
	difference above one. Throws std::logic_error naming the first offending
	pair. Cost is proportional to the number of cells.
	*/
	void verify_balance() const;

	/// Existing cells of the given level intersecting the index box grown by
	/// `margin` indices on each side (wrapping periodic dimensions).
	std::vector<CellId> cells_near(CellId id, std::uint64_t margin, int level) const;

	/// Face-neighbor search of a cell given neighborhood size 0 (the literal
	/// rule: a refined face neighbor contributes all of its existing children).
	std::vector<CellId> face_neighbors(CellId id) const;

private:
	void rebuild();
	void rebuild_arrows();
	std::vector<CellId> search_box_neighbors(CellId id) const;
	/// Face rule toward one side; `shift` receives the periodic wrap applied.
	std::vector<CellId> face_neighbors_toward(CellId id, std::size_t dim, std::int64_t direction,
	                                          RawIndices& shift) const;
	/// Existing cells at the level of `parent` whose neighborhoods may reach its children.
	std::vector<CellId> coarse_reaching_cells(CellId parent) const;

	Topology topology_;
	unsigned neighborhood_size_;
	int rank_;
	int rank_count_;
	CellTable cells_;
	std::vector<std::size_t> level_counts_;
	std::vector<std::size_t> owner_counts_;
	std::vector<CellId> local_;
	std::unordered_map<CellId, std::size_t> local_slot_;
	std::vector<std::vector<CellId>> neighbors_of_;
	std::vector<std::vector<CellId>> neighbors_to_;
	std::vector<CellId> remote_neighbors_;
	CellClassification classes_;
	std::uint64_t version_ = 0;
};

/// True when cell `b` lies in the neighborhood of cell `a` of size n >= 1,
/// i.e. b's box intersects a's box grown by n * (a's size), with periodic wrap.
bool in_box_neighborhood(const Topology& topology, unsigned neighborhood_size, CellId a, CellId b);

/// True when the boxes of `a` and `b` share a face patch of positive area.
bool faces_touch(const Topology& topology, CellId a, CellId b);

} // namespace gridforge
