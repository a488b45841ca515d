#pragma once

#include "gridforge/exchange.hpp"

#include <cstdint>
#include <vector>

namespace gridforge::apps {

struct AmrSpeedOptions {
	std::uint64_t base = 8;
	std::uint64_t target = 128;
	int ranks = 1;
	unsigned neighborhood = 1;
};

struct AmrSpeedResult {
	int levels = 0;
	std::uint64_t created = 0;
	std::uint64_t final_cells = 0;
	double seconds = 0;
	double cells_per_second() const { return seconds > 0 ? static_cast<double>(created) / seconds : 0; }
	std::vector<std::uint64_t> created_per_round;
};

/// Refines every cell of a base^3 grid until it is target^3; partitioning is untimed.
AmrSpeedResult bench_amr_speed(const AmrSpeedOptions& options);

struct ExchangeBenchOptions {
	std::uint64_t cells = 32; ///< cells per dimension of a periodic cube
	std::size_t bytes = 128;  ///< payload per cell
	int ranks = 2;
	Batching batching = Batching::per_rank;
	std::size_t repetitions = 10;
};

struct ExchangeBenchResult {
	std::uint64_t messages = 0;
	std::uint64_t bytes = 0;
	std::uint64_t collectives = 0;
	double seconds = 0;
};

/// Repeated remote neighbor updates of fixed-size payloads (neighborhood 1).
ExchangeBenchResult bench_exchange(const ExchangeBenchOptions& options);

} // namespace gridforge::apps
