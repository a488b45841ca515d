#pragma once

#include "gridforge/bytes.hpp"

#include <array>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace gridforge {

/*
Message tags are structured: the top 8 bits select the subsystem that owns the
message, the low 24 bits carry the subsystem's own value (for remote neighbor
updates that is the user's transfer tag). Subsystems therefore never match
each other's messages.
*/
using Tag = std::uint32_t;

enum class Channel : std::uint8_t {
	user = 0,
	exchange = 1,
	structure = 2,
	migration = 3,
};

inline constexpr std::uint32_t tag_value_mask = 0x00FFFFFF;

constexpr Tag make_tag(Channel channel, std::uint32_t value)
{
	return (static_cast<Tag>(channel) << 24) | (value & tag_value_mask);
}

constexpr Channel channel_of(Tag tag) { return static_cast<Channel>(tag >> 24); }

/// Transport-level failure: oversized payload, misuse of a handle, ...
class TransportError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Raised when every live rank is blocked and none of them can proceed.
class DeadlockError : public TransportError {
public:
	using TransportError::TransportError;
};

/// Raised in the surviving ranks when another rank failed.
class RankAborted : public TransportError {
public:
	using TransportError::TransportError;
};

/*!
Byte layout of one envelope for backends that cross a process boundary:
u32 source, u32 destination, u32 tag, u64 payload length, payload bytes.
All integers little-endian.
*/
struct Envelope {
	int source = 0;
	int destination = 0;
	Tag tag = 0;
	Bytes payload;

	friend bool operator==(const Envelope&, const Envelope&) = default;
};

Bytes encode_envelope(const Envelope& envelope);
Envelope decode_envelope(std::span<const std::byte> wire);

enum class ReduceOp { min, max, sum };

/// Per-rank traffic counters.
struct TransportStats {
	std::uint64_t messages_sent = 0;
	std::uint64_t bytes_sent = 0;
	std::array<std::uint64_t, 256> messages_by_channel{};
	std::uint64_t allreduces = 0;
	std::uint64_t allgathers = 0;
	std::uint64_t barriers = 0;

	std::uint64_t collectives() const noexcept { return allreduces + allgathers + barriers; }
	std::uint64_t messages_on(Channel channel) const noexcept
	{
		return messages_by_channel[static_cast<std::size_t>(channel)];
	}
};

class Router;

/// Handle of a posted send or receive. Owned by the posting rank.
class Request {
public:
	Request() = default;

	bool is_receive() const noexcept { return receive_; }
	bool completed() const noexcept { return completed_; }
	/// Received bytes; valid after the receive completed.
	const Bytes& payload() const noexcept { return payload_; }
	Bytes take_payload() noexcept { return std::move(payload_); }

private:
	friend class Communicator;

	int owner_ = -1;
	bool receive_ = false;
	bool completed_ = false;
	int peer_ = -1;
	Tag tag_ = 0;
	std::uint64_t ticket_ = 0;
	std::size_t max_length_ = 0;
	Bytes payload_;
};

/*!
One rank's view of the in-process message router.

Sends are buffered: the payload is copied into the destination's mailbox when
posted, so a send completes immediately. Receives name their source, tag and
maximum length; the k-th receive posted for a (source, tag) pair matches the
k-th message sent on it.
*/
class Communicator {
public:
	Communicator(std::shared_ptr<Router> router, int rank);

	int rank() const noexcept { return rank_; }
	int size() const noexcept;

	Request post_send(int destination, Tag tag, Bytes payload);
	Request post_receive(int source, Tag tag, std::size_t max_length);

	void wait(Request& request);
	void wait_all(std::span<Request> requests);

	template <typename T>
		requires std::is_arithmetic_v<T>
	T allreduce(T value, ReduceOp op)
	{
		Bytes mine;
		ByteWriter(mine).put(value);
		const auto blocks = collective(CollectiveKind::allreduce, std::move(mine), reduce_code<T>(op));
		// rank-ascending fold so that sums are reproducible run to run
		T result = ByteReader(blocks.front()).get<T>();
		for (std::size_t r = 1; r < blocks.size(); ++r) {
			const T other = ByteReader(blocks[r]).get<T>();
			switch (op) {
			case ReduceOp::min: result = other < result ? other : result; break;
			case ReduceOp::max: result = other > result ? other : result; break;
			case ReduceOp::sum: result = result + other; break;
			}
		}
		return result;
	}

	/// Every rank's block, indexed by rank; identical on all ranks.
	std::vector<Bytes> allgather_variable(std::span<const std::byte> block);

	void barrier();

	TransportStats stats() const;

private:
	enum class CollectiveKind : std::uint8_t { allreduce, allgather, barrier };

	template <typename T>
	static std::uint32_t reduce_code(ReduceOp op)
	{
		std::uint32_t type_code = std::is_floating_point_v<T> ? 1u : (std::is_signed_v<T> ? 2u : 3u);
		return (static_cast<std::uint32_t>(op) << 16) | (type_code << 8) | static_cast<std::uint32_t>(sizeof(T));
	}

	std::vector<Bytes> collective(CollectiveKind kind, Bytes block, std::uint32_t signature);

	std::shared_ptr<Router> router_;
	int rank_;
};

struct RunOptions {
	/// Serialize the ranks and pick which one runs next from a seeded
	/// generator. Interleavings replay exactly for a given seed.
	bool deterministic = false;
	std::uint64_t schedule_seed = 0;
};

namespace detail {
void run_rank_programs(int size, const std::function<void(Communicator&)>& program, const RunOptions& options);
}

/*!
Runs `program(communicator)` once per rank, each rank on its own thread, and
returns the per-rank results indexed by rank. When a rank throws, the others
are aborted and the originating exception is rethrown.
*/
template <typename Program>
auto run_ranks(int size, Program&& program, RunOptions options = {})
{
	using Result = std::invoke_result_t<Program&, Communicator&>;
	if constexpr (std::is_void_v<Result>) {
		detail::run_rank_programs(size, [&](Communicator& comm) { program(comm); }, options);
	} else {
		std::vector<std::optional<Result>> slots(size > 0 ? static_cast<std::size_t>(size) : 0);
		detail::run_rank_programs(
			size, [&](Communicator& comm) { slots[static_cast<std::size_t>(comm.rank())].emplace(program(comm)); },
			options);
		std::vector<Result> results;
		results.reserve(slots.size());
		for (auto& slot : slots) {
			results.push_back(std::move(*slot));
		}
		return results;
	}
}

} // namespace gridforge
