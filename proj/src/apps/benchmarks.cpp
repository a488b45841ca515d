#include "apps/benchmarks.hpp"

#include "gridforge/grid.hpp"

#include <chrono>
#include <stdexcept>

namespace gridforge::apps {

namespace {

struct NoData {};

/// Fixed-size opaque payload, the same length for every tag.
struct Payload {
	std::vector<std::byte> bytes;

	std::size_t transfer_size(TransferTag) const { return bytes.size(); }
	void write_transfer(TransferTag, Bytes& out) const { ByteWriter(out).put_bytes(bytes); }
	void read_transfer(TransferTag, std::span<const std::byte> in) { bytes.assign(in.begin(), in.end()); }
};

} // namespace

AmrSpeedResult bench_amr_speed(const AmrSpeedOptions& options)
{
	if (options.base == 0 || options.target < options.base) {
		throw std::invalid_argument("amr-speed: target must be at least the base");
	}
	int levels = 0;
	std::uint64_t size = options.base;
	while (size < options.target) {
		size *= 2;
		++levels;
	}
	if (size != options.target) {
		throw std::invalid_argument("amr-speed: target must be base times a power of two");
	}

	struct RankOutput {
		std::vector<std::uint64_t> created;
		std::uint64_t final_cells = 0;
		double seconds = 0;
	};
	const Topology topology({options.base, options.base, options.base}, levels, {false, false, false});
	const auto outputs = run_ranks(options.ranks, [&](Communicator& comm) {
		Grid<NoData> grid(comm, topology, ConstantGeometry<double>{}, options.neighborhood,
		                  PartitionMethod::hilbert());
		RankOutput out;
		comm.barrier();
		const auto start = std::chrono::steady_clock::now();
		for (int round = 0; round < levels; ++round) {
			for (const CellId id : grid.local_cells()) {
				grid.refine_completely(id);
			}
			out.created.push_back(grid.stop_refining().created.size());
		}
		comm.barrier();
		out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		out.final_cells = grid.mesh().cell_count();
		return out;
	});

	AmrSpeedResult result;
	result.levels = levels;
	result.created_per_round = outputs.front().created;
	for (const auto count : result.created_per_round) {
		result.created += count;
	}
	result.final_cells = outputs.front().final_cells;
	result.seconds = outputs.front().seconds;
	return result;
}

ExchangeBenchResult bench_exchange(const ExchangeBenchOptions& options)
{
	if (options.cells == 0) {
		throw std::invalid_argument("exchange bench: need at least one cell per dimension");
	}
	struct RankOutput {
		TransportStats stats;
		double seconds = 0;
	};
	const Topology topology({options.cells, options.cells, options.cells}, 0, {true, true, true});
	const auto outputs = run_ranks(options.ranks, [&](Communicator& comm) {
		Grid<Payload> grid(comm, topology, ConstantGeometry<double>{}, 1, PartitionMethod::hilbert());
		grid.set_message_batching(options.batching);
		for (const CellId id : grid.local_cells()) {
			grid[id].bytes.assign(options.bytes, static_cast<std::byte>(id & 0xFF));
		}
		for (const auto& [id, copy] : grid.remote_copies()) {
			grid[id].bytes.resize(options.bytes);
		}
		comm.barrier();
		const auto before = comm.stats();
		const auto start = std::chrono::steady_clock::now();
		for (std::size_t k = 0; k < options.repetitions; ++k) {
			grid.update_copies_of_remote_neighbors();
		}
		RankOutput out;
		out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		const auto after = comm.stats();
		out.stats.messages_sent = after.messages_sent - before.messages_sent;
		out.stats.bytes_sent = after.bytes_sent - before.bytes_sent;
		out.stats.allreduces = after.allreduces - before.allreduces;
		out.stats.allgathers = after.allgathers - before.allgathers;
		out.stats.barriers = after.barriers - before.barriers;
		return out;
	});

	ExchangeBenchResult result;
	for (const auto& out : outputs) {
		result.messages += out.stats.messages_sent;
		result.bytes += out.stats.bytes_sent;
		result.collectives += out.stats.collectives();
		result.seconds = std::max(result.seconds, out.seconds);
	}
	return result;
}

} // namespace gridforge::apps
