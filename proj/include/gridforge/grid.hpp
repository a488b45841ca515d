#pragma once

#include "gridforge/amr.hpp"
#include "gridforge/exchange.hpp"
#include "gridforge/geometry.hpp"
#include "gridforge/mesh.hpp"
#include "gridforge/partition.hpp"
#include "gridforge/transport.hpp"

#include <algorithm>
#include <array>
#include <concepts>
#include <cstring>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gridforge {

/*!
Cell data that decides per transfer tag which bytes travel. The bytes written
for migration_tag must restore the complete cell.
*/
template <typename T>
concept TransferableCell = std::default_initializable<T> && requires(const T& c, T& m, TransferTag tag, Bytes& out,
                                                                        std::span<const std::byte> in) {
	{ c.transfer_size(tag) } -> std::convertible_to<std::size_t>;
	c.write_transfer(tag, out);
	m.read_transfer(tag, in);
};

/// Trivially copyable data travels whole, whatever the tag.
template <typename T>
concept PlainCell = std::default_initializable<T> && std::is_trivially_copyable_v<T> && !TransferableCell<T>;

template <typename T>
concept GridCell = TransferableCell<T> || PlainCell<T>;

template <GridCell T>
std::size_t cell_transfer_size(const T& cell, TransferTag tag)
{
	if constexpr (TransferableCell<T>) {
		return cell.transfer_size(tag);
	} else {
		(void)cell;
		(void)tag;
		return sizeof(T);
	}
}

template <GridCell T>
void write_cell(const T& cell, TransferTag tag, Bytes& out)
{
	if constexpr (TransferableCell<T>) {
		cell.write_transfer(tag, out);
	} else {
		(void)tag;
		std::memcpy(ByteWriter(out).grow(sizeof(T)).data(), &cell, sizeof(T));
	}
}

template <GridCell T>
void read_cell(T& cell, TransferTag tag, std::span<const std::byte> in)
{
	if constexpr (TransferableCell<T>) {
		cell.read_transfer(tag, in);
	} else {
		(void)tag;
		if (in.size() != sizeof(T)) {
			throw TransportError("cell data: expected " + std::to_string(sizeof(T)) + " bytes, got "
			                     + std::to_string(in.size()));
		}
		std::memcpy(&cell, in.data(), sizeof(T));
	}
}

struct MigrationReport {
	std::size_t moved = 0;    ///< cells that changed owner, over all ranks
	std::size_t sent = 0;     ///< cells this rank sent away
	std::size_t received = 0; ///< cells this rank took over
};

/*!
Distributed cell-based grid: one instance per rank, all of them driven
collectively through the same sequence of structural calls.

Cell data of local cells and of the remote cells they neighbor is reached
through operator[]; remote copies are refreshed only by the update calls.
*/
template <GridCell CellData, CellGeometry Geometry = ConstantGeometry<double>>
class Grid {
public:
	using Prolong = std::function<void(CellId parent, const CellData& parent_data, std::span<CellData> children)>;
	using Restrict = std::function<void(CellId parent, std::span<const CellData> children, CellData& parent_data)>;
	using Weight = std::function<double(CellId, const CellData&)>;
	/// Called on a remote copy after its counts arrived, before its payload does.
	using Resize = std::function<void(CellId, CellData&)>;

	Grid(Communicator& comm, Topology topology, Geometry geometry, unsigned neighborhood_size,
	     PartitionMethod initial = PartitionMethod::hilbert())
		: comm_(&comm),
		  geometry_(std::move(geometry)),
		  mesh_(std::move(topology), neighborhood_size, comm.rank(), comm.size())
	{
		const Topology& topo = mesh_.topology();
		const std::uint64_t count = topo.cells_on_level(0);
		std::vector<CellId> cells(count);
		for (std::uint64_t k = 0; k < count; ++k) {
			cells[k] = topo.level_start(0) + k;
		}
		std::vector<int> owners;
		if (initial.kind == PartitionKind::none) {
			owners.assign(cells.size(), 0);
		} else {
			owners = partition(initial, topo, cells, {}, comm.size());
		}
		CellTable table;
		table.reserve(cells.size());
		for (std::size_t k = 0; k < cells.size(); ++k) {
			table.emplace(cells[k], owners[k]);
		}
		mesh_.assign(std::move(table));
		for (const CellId id : mesh_.local_cells()) {
			local_.try_emplace(id);
		}
		sync_remote_copies();

		prolong_ = [](CellId, const CellData& parent, std::span<CellData> children) {
			std::fill(children.begin(), children.end(), parent);
		};
		restrict_ = [](CellId, std::span<const CellData> children, CellData& parent) {
			if constexpr (std::is_arithmetic_v<CellData>) {
				CellData sum{};
				for (const auto& child : children) {
					sum += child;
				}
				parent = sum / CellData(children.size());
			} else {
				parent = children.front();
			}
		};
	}

	Communicator& comm() noexcept { return *comm_; }
	const Mesh& mesh() const noexcept { return mesh_; }
	const Topology& topology() const noexcept { return mesh_.topology(); }
	const Geometry& geometry() const noexcept { return geometry_; }

	std::span<const CellId> local_cells() const noexcept { return mesh_.local_cells(); }
	std::span<const CellId> neighbors_of(CellId id) const { return mesh_.neighbors_of(id); }
	std::span<const CellId> neighbors_to(CellId id) const { return mesh_.neighbors_to(id); }
	int owner_of(CellId id) const { return mesh_.owner_of(id); }
	bool is_local(CellId id) const { return mesh_.is_local(id); }
	bool exists(CellId id) const { return mesh_.exists(id); }
	const CellClassification& classify_cells() const noexcept { return mesh_.classify_cells(); }
	std::optional<CellId> find_smallest_existing(const Indices& indices) const
	{
		return mesh_.find_smallest_existing(indices);
	}

	/// Data of a local cell or of a held remote copy.
	CellData& operator[](CellId id) { return const_cast<CellData&>(std::as_const(*this)[id]); }
	const CellData& operator[](CellId id) const
	{
		if (const auto it = local_.find(id); it != local_.end()) {
			return it->second;
		}
		if (const auto it = remote_.find(id); it != remote_.end()) {
			return it->second;
		}
		if (!mesh_.exists(id)) {
			throw NoSuchCell(id);
		}
		throw NotLocal(id);
	}

	const std::unordered_map<CellId, CellData>& remote_copies() const noexcept { return remote_; }

	// ---- refinement --------------------------------------------------------

	void refine_completely(CellId id) { queue_.refine(mesh_, id); }
	void unrefine(CellId id) { queue_.unrefine(mesh_, id); }
	const AdaptationQueue& adaptation_queue() const noexcept { return queue_; }

	void set_unrefine_policy(UnrefinePolicy policy) noexcept { unrefine_policy_ = policy; }

	void set_prolong(Prolong prolong) { prolong_ = std::move(prolong); }
	void set_restrict(Restrict restrict) { restrict_ = std::move(restrict); }

	/// Collective. Commits all queued requests plus induced refinement.
	StructureChange stop_refining()
	{
		require_idle("stop_refining");
		StructureChange change = synchronize_adaptation(*comm_, mesh_, queue_, unrefine_policy_);
		queue_.clear();
		if (change.refined.empty() && change.unrefined.empty()) {
			return change;
		}
		const Topology& topo = mesh_.topology();
		const int self = comm_->rank();

		// children of unrefined groups travel to the owner of the first child
		std::map<int, std::vector<std::pair<CellId, Bytes>>> outgoing;
		std::vector<int> sources;
		for (const CellId parent : change.unrefined) {
			const auto children = topo.children_of(parent);
			const int target = mesh_.owner_of(children.front());
			for (const CellId child : children) {
				const int owner = mesh_.owner_of(child);
				if (owner == target) {
					continue;
				}
				if (owner == self) {
					Bytes bytes;
					write_cell(local_.at(child), migration_tag, bytes);
					outgoing[target].emplace_back(child, std::move(bytes));
				} else if (target == self) {
					sources.push_back(owner);
				}
			}
		}
		std::sort(sources.begin(), sources.end());
		sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
		std::unordered_map<CellId, CellData> arrived;
		if (comm_->size() > 1) {
			for (auto& [id, bytes] : move_cells(*comm_, Channel::structure, outgoing, sources)) {
				read_cell(arrived[id], migration_tag, bytes);
			}
		}

		std::vector<std::pair<CellId, CellData>> created;
		for (const CellId id : change.refined) {
			const auto it = local_.find(id);
			if (it == local_.end()) {
				continue;
			}
			std::array<CellData, 8> children{};
			prolong_(id, it->second, children);
			const auto ids = topo.children_of(id);
			for (std::size_t k = 0; k < 8; ++k) {
				created.emplace_back(ids[k], std::move(children[k]));
			}
		}
		for (const CellId parent : change.unrefined) {
			const auto ids = topo.children_of(parent);
			if (mesh_.owner_of(ids.front()) != self) {
				continue;
			}
			std::array<CellData, 8> children{};
			for (std::size_t k = 0; k < 8; ++k) {
				const auto it = local_.find(ids[k]);
				children[k] = it != local_.end() ? it->second : arrived.at(ids[k]);
			}
			CellData data{};
			restrict_(parent, children, data);
			created.emplace_back(parent, std::move(data));
		}

		mesh_.apply_refinement(change.refined, change.unrefined);
		for (const CellId id : change.removed) {
			local_.erase(id);
			pins_.erase(id);
		}
		for (auto& [id, data] : created) {
			local_.insert_or_assign(id, std::move(data));
		}
		sync_remote_copies();
		return change;
	}

	// ---- load balancing ----------------------------------------------------

	/// Keeps a local cell on `rank` through every balance_load until unpinned.
	void pin(CellId id, int rank)
	{
		require_local(id);
		if (rank < 0 || rank >= comm_->size()) {
			throw std::invalid_argument("pin: rank " + std::to_string(rank) + " out of range");
		}
		pins_[id] = rank;
	}
	void unpin(CellId id)
	{
		require_local(id);
		pins_.erase(id);
	}
	void unpin_all() { pins_.clear(); }

	void set_weight(Weight weight) { weight_ = std::move(weight); }

	/// Collective. Repartitions, honoring pins, and moves cell data to new owners.
	MigrationReport balance_load(const PartitionMethod& method)
	{
		require_idle("balance_load");
		const Topology& topo = mesh_.topology();
		const int self = comm_->rank();

		// local pins and weights are published to everyone
		Bytes block;
		ByteWriter out(block);
		out.put(static_cast<std::uint64_t>(pins_.size()));
		for (const auto& [id, rank] : pins_) {
			out.put(static_cast<std::uint64_t>(id));
			out.put(static_cast<std::int32_t>(rank));
		}
		const bool weighted = static_cast<bool>(weight_);
		if (weighted) {
			for (const CellId id : mesh_.local_cells()) {
				out.put(weight_(id, local_.at(id)));
			}
		}
		const std::vector<CellId> cells = mesh_.all_cells();
		std::vector<int> current(cells.size());
		for (std::size_t k = 0; k < cells.size(); ++k) {
			current[k] = mesh_.owner_of(cells[k]);
		}

		PinSet all_pins;
		std::vector<double> weights;
		if (comm_->size() > 1 || weighted) {
			const auto blocks = comm_->allgather_variable(block);
			std::unordered_map<CellId, double> weight_of;
			for (std::size_t r = 0; r < blocks.size(); ++r) {
				ByteReader in(blocks[r]);
				const auto count = in.get<std::uint64_t>();
				for (std::uint64_t k = 0; k < count; ++k) {
					const CellId id = in.get<std::uint64_t>();
					all_pins[id] = in.get<std::int32_t>();
				}
				if (weighted) {
					for (std::size_t k = 0; k < cells.size(); ++k) {
						if (current[k] == static_cast<int>(r)) {
							weight_of[cells[k]] = in.get<double>();
						}
					}
				}
			}
			if (weighted) {
				weights.reserve(cells.size());
				for (const CellId id : cells) {
					weights.push_back(weight_of.at(id));
				}
			}
		} else {
			all_pins = pins_;
		}

		std::vector<int> owners = partition(method, topo, cells, weights, comm_->size(), current);
		for (std::size_t k = 0; k < cells.size(); ++k) {
			if (const auto it = all_pins.find(cells[k]); it != all_pins.end()) {
				owners[k] = it->second;
			}
		}

		MigrationReport report;
		std::vector<std::pair<CellId, int>> changes;
		std::map<int, std::vector<std::pair<CellId, Bytes>>> outgoing;
		std::vector<int> sources;
		for (std::size_t k = 0; k < cells.size(); ++k) {
			if (owners[k] == current[k]) {
				continue;
			}
			changes.emplace_back(cells[k], owners[k]);
			if (current[k] == self) {
				Bytes bytes;
				write_cell(local_.at(cells[k]), migration_tag, bytes);
				outgoing[owners[k]].emplace_back(cells[k], std::move(bytes));
				++report.sent;
			} else if (owners[k] == self) {
				sources.push_back(current[k]);
			}
		}
		report.moved = changes.size();
		if (changes.empty()) {
			return report;
		}
		std::sort(sources.begin(), sources.end());
		sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
		auto received = move_cells(*comm_, Channel::migration, outgoing, sources);
		report.received = received.size();

		for (const auto& [destination, list] : outgoing) {
			for (const auto& entry : list) {
				local_.erase(entry.first);
			}
		}
		for (auto& [id, bytes] : received) {
			read_cell(local_[id], migration_tag, bytes);
		}
		mesh_.set_owners(changes);

		// pins follow their cells
		pins_.clear();
		for (const auto& [id, rank] : all_pins) {
			if (mesh_.exists(id) && mesh_.owner_of(id) == self) {
				pins_[id] = rank;
			}
		}
		sync_remote_copies();
		return report;
	}

	/// N_max / N_min of local cell counts; read from the replicated table.
	double local_cell_fraction() const { return gridforge::local_cell_fraction(mesh_.local_cell_counts()); }

	// ---- remote neighbor updates -------------------------------------------

	void set_message_batching(Batching batching) { exchange_.set_batching(batching); }
	void set_verify_unchanged_sends(bool enabled) { exchange_.set_verify_unchanged_sends(enabled); }

	/// The current send/receive lists; rebuilt lazily after structural changes.
	const TransferPlan& transfer_plan()
	{
		if (!plan_valid_ || plan_.structure_version != mesh_.structure_version()) {
			plan_ = build_transfer_plan(mesh_);
			plan_valid_ = true;
		}
		return plan_;
	}

	void update_copies_of_remote_neighbors(TransferTag tag = {})
	{
		start_remote_neighbor_copy_updates(tag);
		wait_remote_neighbor_copy_update_receives();
		wait_remote_neighbor_copy_update_sends();
	}

	void start_remote_neighbor_copy_updates(TransferTag tag = {})
	{
		exchange_.start(*comm_, transfer_plan(), mesh_.structure_version(), tag, serializer(), sizer());
	}

	void wait_remote_neighbor_copy_update_receives()
	{
		exchange_.wait_receives(*comm_, mesh_.structure_version(), sink());
	}

	void wait_remote_neighbor_copy_update_sends()
	{
		exchange_.wait_sends(*comm_, mesh_.structure_version(), serializer());
	}

	/*!
	Counts first, then payloads sized from those counts. `resize` prepares
	each remote copy for its payload; the payload must then fill exactly
	transfer_size(payload_tag) bytes.
	*/
	void two_phase_variable_exchange(TransferTag count_tag, TransferTag payload_tag, const Resize& resize)
	{
		update_copies_of_remote_neighbors(count_tag);
		for (const auto& [source, cells] : transfer_plan().receive) {
			for (const CellId id : cells) {
				resize(id, remote_.at(id));
			}
		}
		const RemoteNeighborExchange::Sink exact = [this](CellId id, TransferTag tag, std::span<const std::byte> in) {
			CellData& copy = remote_.at(id);
			const std::size_t expected = cell_transfer_size(copy, tag);
			if (in.size() != expected) {
				throw TransportError("two-phase exchange: cell " + std::to_string(id) + " sent "
				                     + std::to_string(in.size()) + " payload bytes, its count announced "
				                     + std::to_string(expected));
			}
			read_cell(copy, tag, in);
		};
		exchange_.update(*comm_, transfer_plan(), mesh_.structure_version(), payload_tag, serializer(), sizer(),
		                 exact);
	}

private:
	void require_local(CellId id) const
	{
		if (!mesh_.exists(id)) {
			throw NoSuchCell(id);
		}
		if (!mesh_.is_local(id)) {
			throw NotLocal(id);
		}
	}

	void require_idle(const char* what) const
	{
		if (exchange_.in_flight()) {
			throw std::logic_error(std::string(what) + ": a remote neighbor update is still in flight");
		}
	}

	/// Keeps exactly one copy per remote neighbor, retaining surviving values.
	void sync_remote_copies()
	{
		std::unordered_map<CellId, CellData> next;
		next.reserve(mesh_.remote_neighbors().size());
		for (const CellId id : mesh_.remote_neighbors()) {
			if (auto it = remote_.find(id); it != remote_.end()) {
				next.emplace(id, std::move(it->second));
			} else {
				next.try_emplace(id);
			}
		}
		remote_ = std::move(next);
		plan_valid_ = false;
	}

	RemoteNeighborExchange::Serializer serializer() const
	{
		return [this](CellId id, TransferTag tag, Bytes& out) { write_cell(local_.at(id), tag, out); };
	}

	RemoteNeighborExchange::Sizer sizer() const
	{
		return [this](CellId id, TransferTag tag) { return cell_transfer_size(remote_.at(id), tag); };
	}

	RemoteNeighborExchange::Sink sink()
	{
		return [this](CellId id, TransferTag tag, std::span<const std::byte> in) {
			read_cell(remote_.at(id), tag, in);
		};
	}

	Communicator* comm_;
	Geometry geometry_;
	Mesh mesh_;
	std::unordered_map<CellId, CellData> local_;
	std::unordered_map<CellId, CellData> remote_;
	AdaptationQueue queue_;
	UnrefinePolicy unrefine_policy_ = UnrefinePolicy::any_sibling;
	Prolong prolong_;
	Restrict restrict_;
	Weight weight_;
	std::map<CellId, int> pins_;
	RemoteNeighborExchange exchange_;
	TransferPlan plan_;
	bool plan_valid_ = false;
};

} // namespace gridforge
