#pragma once

#include "gridforge/exchange.hpp"
#include "gridforge/partition.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gridforge::apps {

/// One board square; only `alive` crosses rank boundaries.
struct LifeCell {
	std::uint8_t alive = 0;
	std::uint32_t live_neighbors = 0;

	std::size_t transfer_size(TransferTag tag) const { return tag == migration_tag ? 5 : 1; }
	void write_transfer(TransferTag tag, Bytes& out) const;
	void read_transfer(TransferTag tag, std::span<const std::byte> in);
};

enum class LifePattern { glider, blinker, glider_blinker, random };

LifePattern parse_life_pattern(const std::string& name);

/// Row-major board, y outermost; 1 = alive.
using Board = std::vector<std::uint8_t>;

Board make_board(std::uint64_t width, std::uint64_t height, LifePattern pattern, std::uint64_t seed);

struct GolOptions {
	std::uint64_t width = 10;
	std::uint64_t height = 10;
	std::size_t steps = 100;
	int ranks = 1;
	PartitionMethod partition = PartitionMethod::hilbert();
	Batching batching = Batching::per_rank;
	bool deterministic_schedule = false;
	std::uint64_t schedule_seed = 0;
};

struct GolStepStats {
	std::size_t step = 0;
	std::size_t cells = 0;
	std::size_t alive = 0;
	double fc = 1;
};

struct GolResult {
	Board board;
	std::vector<GolStepStats> steps;
	/// Per rank: collectives and exchange messages issued after setup.
	std::vector<std::uint64_t> steady_collectives;
	std::vector<std::uint64_t> steady_exchange_messages;
};

/// Non-periodic w x h x 1 board, neighborhood 1, rule B3/S23.
GolResult gol_run(const GolOptions& options, const Board& initial);

} // namespace gridforge::apps
