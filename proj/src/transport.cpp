#include "gridforge/transport.hpp"

#include <condition_variable>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

namespace gridforge {

Bytes encode_envelope(const Envelope& envelope)
{
	Bytes wire;
	ByteWriter out(wire);
	out.put(static_cast<std::uint32_t>(envelope.source));
	out.put(static_cast<std::uint32_t>(envelope.destination));
	out.put(static_cast<std::uint32_t>(envelope.tag));
	out.put(static_cast<std::uint64_t>(envelope.payload.size()));
	out.put_bytes(envelope.payload);
	return wire;
}

Envelope decode_envelope(std::span<const std::byte> wire)
{
	ByteReader in(wire);
	Envelope envelope;
	envelope.source = static_cast<int>(in.get<std::uint32_t>());
	envelope.destination = static_cast<int>(in.get<std::uint32_t>());
	envelope.tag = in.get<std::uint32_t>();
	const auto length = in.get<std::uint64_t>();
	if (length != in.remaining()) {
		throw TransportError("envelope: payload length does not match the wire image");
	}
	const auto payload = in.get_bytes(length);
	envelope.payload.assign(payload.begin(), payload.end());
	return envelope;
}

class Router {
public:
	Router(int size, const RunOptions& options)
		: size_(size), ranks_(static_cast<std::size_t>(size)), stats_(static_cast<std::size_t>(size)),
		  next_collective_(static_cast<std::size_t>(size), 0), deterministic_(options.deterministic),
		  rng_(options.schedule_seed)
	{
		if (deterministic_) {
			std::unique_lock lock(mutex_);
			schedule_next();
		}
	}

	int size() const noexcept { return size_; }

	void enter(int rank)
	{
		std::unique_lock lock(mutex_);
		if (deterministic_) {
			cv_.wait(lock, [&] { return aborted_ || current_ == rank; });
			if (aborted_) {
				throw RankAborted("rank " + std::to_string(rank) + " aborted before starting");
			}
		}
		ranks_[rank].state = State::running;
	}

	void leave(int rank, std::exception_ptr error)
	{
		std::unique_lock lock(mutex_);
		ranks_[rank].state = State::finished;
		if (error) {
			bool secondary = false;
			try {
				std::rethrow_exception(error);
			} catch (const RankAborted&) {
				secondary = true;
			} catch (...) {
			}
			if (!secondary) {
				fail(error);
			}
		}
		cv_.notify_all();
		if (aborted_) {
			return;
		}
		if (deterministic_) {
			schedule_next();
		} else if (all_stuck()) {
			fail(std::make_exception_ptr(DeadlockError(deadlock_report())));
		}
	}

	std::exception_ptr first_error() const { return first_error_; }

	void send(int source, int destination, Tag tag, Bytes payload)
	{
		std::unique_lock lock(mutex_);
		preemption_point(lock, source);
		auto& stats = stats_[source];
		++stats.messages_sent;
		stats.bytes_sent += payload.size();
		++stats.messages_by_channel[static_cast<std::size_t>(channel_of(tag))];

		auto& queue = channels_[{source, destination, tag}];
		queue.pending.emplace(queue.sent++, std::move(payload));
		cv_.notify_all();
	}

	std::uint64_t post_receive(int source, int destination, Tag tag)
	{
		std::unique_lock lock(mutex_);
		throw_if_aborted(destination);
		return channels_[{source, destination, tag}].posted++;
	}

	Bytes complete_receive(int source, int destination, Tag tag, std::uint64_t ticket, std::size_t max_length)
	{
		std::unique_lock lock(mutex_);
		auto& queue = channels_[{source, destination, tag}];
		block_until(lock, destination, [&] { return queue.pending.contains(ticket); }, [&] {
			std::ostringstream what;
			what << "receive from rank " << source << " with tag 0x" << std::hex << tag;
			return what.str();
		});
		auto node = queue.pending.extract(ticket);
		Bytes payload = std::move(node.mapped());
		if (payload.size() > max_length) {
			std::ostringstream what;
			what << "rank " << destination << ": message of " << payload.size() << " bytes from rank " << source
			     << " exceeds the declared maximum of " << max_length << " bytes";
			throw TransportError(what.str());
		}
		return payload;
	}

	std::vector<Bytes> collective(int rank, std::uint32_t signature, Bytes block, std::uint8_t kind)
	{
		std::unique_lock lock(mutex_);
		preemption_point(lock, rank);
		const std::uint64_t sequence = next_collective_[rank]++;
		auto& slot = slots_[sequence];
		if (slot.arrived == 0) {
			slot.signature = signature;
			slot.blocks.resize(static_cast<std::size_t>(size_));
		} else if (slot.signature != signature) {
			throw TransportError("collective #" + std::to_string(sequence) + ": ranks called different collectives");
		}
		slot.blocks[rank] = std::move(block);
		++slot.arrived;
		cv_.notify_all();

		block_until(lock, rank, [&] { return slot.arrived == size_; },
		            [&] { return "collective #" + std::to_string(sequence); });

		std::vector<Bytes> result = slot.blocks;
		if (++slot.departed == size_) {
			slots_.erase(sequence);
		}
		auto& stats = stats_[rank];
		switch (kind) {
		case 0: ++stats.allreduces; break;
		case 1: ++stats.allgathers; break;
		default: ++stats.barriers; break;
		}
		return result;
	}

	TransportStats stats(int rank) const
	{
		std::unique_lock lock(mutex_);
		return stats_[rank];
	}

private:
	enum class State { ready, running, blocked, finished };

	struct RankState {
		State state = State::ready;
		std::function<bool()> can_proceed;
		std::function<std::string()> describe;
	};

	struct Queue {
		std::uint64_t sent = 0;
		std::uint64_t posted = 0;
		std::map<std::uint64_t, Bytes> pending;
	};

	struct Slot {
		std::uint32_t signature = 0;
		int arrived = 0;
		int departed = 0;
		std::vector<Bytes> blocks;
	};

	void throw_if_aborted(int rank) const
	{
		if (aborted_) {
			throw RankAborted("rank " + std::to_string(rank) + " aborted: another rank failed");
		}
	}

	void fail(std::exception_ptr error)
	{
		if (!first_error_) {
			first_error_ = error;
		}
		aborted_ = true;
		cv_.notify_all();
	}

	bool runnable(const RankState& rank) const
	{
		return rank.state == State::ready || (rank.state == State::blocked && rank.can_proceed());
	}

	bool all_stuck() const
	{
		bool any_alive = false;
		for (const auto& rank : ranks_) {
			if (rank.state == State::finished) {
				continue;
			}
			any_alive = true;
			if (rank.state != State::blocked || rank.can_proceed()) {
				return false;
			}
		}
		return any_alive;
	}

	std::string deadlock_report() const
	{
		std::ostringstream report;
		report << "deadlock: every live rank is blocked;";
		for (std::size_t r = 0; r < ranks_.size(); ++r) {
			if (ranks_[r].state == State::blocked) {
				report << " rank " << r << " waits for " << ranks_[r].describe() << ";";
			}
		}
		return report.str();
	}

	/// Deterministic mode only: hand the token to a runnable rank.
	void schedule_next()
	{
		std::vector<int> candidates;
		for (int r = 0; r < size_; ++r) {
			if (runnable(ranks_[r])) {
				candidates.push_back(r);
			}
		}
		if (candidates.empty()) {
			current_ = -1;
			if (all_stuck()) {
				fail(std::make_exception_ptr(DeadlockError(deadlock_report())));
			}
			return;
		}
		current_ = candidates[rng_() % candidates.size()];
		cv_.notify_all();
	}

	void preemption_point(std::unique_lock<std::mutex>& lock, int rank)
	{
		throw_if_aborted(rank);
		if (!deterministic_) {
			return;
		}
		ranks_[rank].state = State::ready;
		schedule_next();
		cv_.wait(lock, [&] { return aborted_ || current_ == rank; });
		throw_if_aborted(rank);
		ranks_[rank].state = State::running;
	}

	template <typename Predicate, typename Describe>
	void block_until(std::unique_lock<std::mutex>& lock, int rank, Predicate ready, Describe describe)
	{
		for (;;) {
			throw_if_aborted(rank);
			if (ready()) {
				ranks_[rank].state = State::running;
				return;
			}
			auto& self = ranks_[rank];
			self.state = State::blocked;
			self.can_proceed = ready;
			self.describe = describe;
			if (deterministic_) {
				schedule_next();
				if (aborted_) {
					throw DeadlockError(deadlock_report());
				}
				cv_.wait(lock, [&] { return aborted_ || current_ == rank; });
			} else {
				if (all_stuck()) {
					auto error = DeadlockError(deadlock_report());
					fail(std::make_exception_ptr(error));
					throw error;
				}
				cv_.wait(lock);
			}
			self.state = State::running;
		}
	}

	mutable std::mutex mutex_;
	std::condition_variable cv_;
	int size_;
	std::vector<RankState> ranks_;
	std::vector<TransportStats> stats_;
	std::map<std::tuple<int, int, Tag>, Queue> channels_;
	std::map<std::uint64_t, Slot> slots_;
	std::vector<std::uint64_t> next_collective_;
	bool aborted_ = false;
	std::exception_ptr first_error_;
	bool deterministic_;
	std::mt19937_64 rng_;
	int current_ = -1;
};

Communicator::Communicator(std::shared_ptr<Router> router, int rank) : router_(std::move(router)), rank_(rank) {}

int Communicator::size() const noexcept { return router_->size(); }

Request Communicator::post_send(int destination, Tag tag, Bytes payload)
{
	if (destination < 0 || destination >= size()) {
		throw TransportError("send to invalid rank " + std::to_string(destination));
	}
	Request request;
	request.owner_ = rank_;
	request.peer_ = destination;
	request.tag_ = tag;
	router_->send(rank_, destination, tag, std::move(payload));
	request.completed_ = true;
	return request;
}

Request Communicator::post_receive(int source, Tag tag, std::size_t max_length)
{
	if (source < 0 || source >= size()) {
		throw TransportError("receive from invalid rank " + std::to_string(source));
	}
	Request request;
	request.owner_ = rank_;
	request.receive_ = true;
	request.peer_ = source;
	request.tag_ = tag;
	request.max_length_ = max_length;
	request.ticket_ = router_->post_receive(source, rank_, tag);
	return request;
}

void Communicator::wait(Request& request)
{
	if (request.owner_ != rank_) {
		throw TransportError("rank " + std::to_string(rank_) + " cannot complete a request posted by rank "
		                     + std::to_string(request.owner_));
	}
	if (request.completed_) {
		return;
	}
	request.payload_ =
		router_->complete_receive(request.peer_, rank_, request.tag_, request.ticket_, request.max_length_);
	request.completed_ = true;
}

void Communicator::wait_all(std::span<Request> requests)
{
	for (auto& request : requests) {
		wait(request);
	}
}

std::vector<Bytes> Communicator::allgather_variable(std::span<const std::byte> block)
{
	return collective(CollectiveKind::allgather, Bytes(block.begin(), block.end()), 0);
}

void Communicator::barrier() { collective(CollectiveKind::barrier, {}, 0); }

std::vector<Bytes> Communicator::collective(CollectiveKind kind, Bytes block, std::uint32_t signature)
{
	const auto kind_code = static_cast<std::uint8_t>(kind);
	return router_->collective(rank_, (static_cast<std::uint32_t>(kind_code) << 28) ^ signature, std::move(block),
	                           kind_code);
}

TransportStats Communicator::stats() const { return router_->stats(rank_); }

namespace detail {

void run_rank_programs(int size, const std::function<void(Communicator&)>& program, const RunOptions& options)
{
	if (size < 1) {
		throw std::invalid_argument("run_ranks: need at least one rank");
	}
	auto router = std::make_shared<Router>(size, options);

	std::vector<std::thread> threads;
	threads.reserve(static_cast<std::size_t>(size));
	for (int rank = 0; rank < size; ++rank) {
		threads.emplace_back([&, rank] {
			std::exception_ptr error;
			try {
				router->enter(rank);
				Communicator comm(router, rank);
				program(comm);
			} catch (...) {
				error = std::current_exception();
			}
			router->leave(rank, error);
		});
	}
	for (auto& thread : threads) {
		thread.join();
	}
	if (auto error = router->first_error()) {
		std::rethrow_exception(error);
	}
}

} // namespace detail

} // namespace gridforge
