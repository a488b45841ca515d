#pragma once

#include "gridforge/mesh.hpp"
#include "gridforge/transport.hpp"

#include <compare>
#include <functional>
#include <map>
#include <vector>

namespace gridforge {

/// Selects which slice of cell data a transfer moves.
struct TransferTag {
	std::uint32_t value = 0;
	friend auto operator<=>(const TransferTag&, const TransferTag&) = default;
};

/// Reserved: the complete state of a cell, used when cells move between ranks.
inline constexpr TransferTag migration_tag{tag_value_mask};

enum class Batching {
	per_cell, ///< one message per cell and destination
	per_rank, ///< one message per neighboring rank
};

/*!
Who sends which local cells to whom, and which remote cells arrive from whom.
Computed from the replicated mesh alone; lists are ascending, and rank a's send
list to b equals b's receive list from a.
*/
struct TransferPlan {
	std::map<int, std::vector<CellId>> send;
	std::map<int, std::vector<CellId>> receive;
	std::uint64_t structure_version = 0;

	bool empty() const noexcept { return send.empty() && receive.empty(); }
};

TransferPlan build_transfer_plan(const Mesh& mesh);

/// Wire image of a batched message: u64 cell count, then per cell
/// u64 id, u32 payload length, payload. Little-endian.
Bytes encode_batch(std::span<const std::pair<CellId, Bytes>> cells);
std::vector<std::pair<CellId, Bytes>> decode_batch(std::span<const std::byte> wire);

/*!
Moves whole cells point to point. `outgoing` maps destination ranks to cells;
`sources` lists every rank this rank receives from, which the caller derives
from the replicated table. Sizes travel first so every receive is bounded.
Returns the received cells, ascending by id.
*/
std::vector<std::pair<CellId, Bytes>> move_cells(Communicator& comm, Channel channel,
                                                 const std::map<int, std::vector<std::pair<CellId, Bytes>>>& outgoing,
                                                 std::span<const int> sources);

/*!
Drives remote neighbor updates over a TransferPlan. Cell data is reached only
through the callbacks, so the engine is independent of the cell type.

A started update must be completed by exactly one wait_receives and one
wait_sends, in either order, with no structural change in between.
*/
class RemoteNeighborExchange {
public:
	/// Appends the bytes of a local cell for the tag.
	using Serializer = std::function<void(CellId, TransferTag, Bytes&)>;
	/// Largest number of bytes the local copy of a remote cell accepts.
	using Sizer = std::function<std::size_t(CellId, TransferTag)>;
	/// Stores received bytes into the local copy of a remote cell.
	using Sink = std::function<void(CellId, TransferTag, std::span<const std::byte>)>;

	void set_batching(Batching batching);
	Batching batching() const noexcept { return batching_; }

	/// Re-serialize sent cells at wait_sends and fail if their bytes changed.
	void set_verify_unchanged_sends(bool enabled) noexcept { verify_sends_ = enabled; }

	bool in_flight() const noexcept { return receives_pending_ || sends_pending_; }

	void start(Communicator& comm, const TransferPlan& plan, std::uint64_t structure_version, TransferTag tag,
	           const Serializer& serialize, const Sizer& expected_size);
	void wait_receives(Communicator& comm, std::uint64_t structure_version, const Sink& store);
	void wait_sends(Communicator& comm, std::uint64_t structure_version, const Serializer& serialize);

	void update(Communicator& comm, const TransferPlan& plan, std::uint64_t structure_version, TransferTag tag,
	            const Serializer& serialize, const Sizer& expected_size, const Sink& store);

private:
	struct PendingReceive {
		int source = 0;
		std::vector<CellId> cells;
		std::vector<std::size_t> limits;
		std::vector<Request> requests;
	};

	void require_version(std::uint64_t structure_version) const;

	Batching batching_ = Batching::per_rank;
#ifdef NDEBUG
	bool verify_sends_ = false;
#else
	bool verify_sends_ = true;
#endif
	bool receives_pending_ = false;
	bool sends_pending_ = false;
	TransferTag tag_{};
	std::uint64_t version_ = 0;
	std::vector<PendingReceive> receives_;
	std::vector<Request> sends_;
	std::vector<std::pair<CellId, std::uint64_t>> send_digests_;
};

} // namespace gridforge
