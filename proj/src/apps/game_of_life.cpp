#include "apps/game_of_life.hpp"

#include "gridforge/grid.hpp"

#include <random>
#include <stdexcept>

namespace gridforge::apps {

void LifeCell::write_transfer(TransferTag tag, Bytes& out) const
{
	ByteWriter writer(out);
	writer.put(alive);
	if (tag == migration_tag) {
		writer.put(live_neighbors);
	}
}

void LifeCell::read_transfer(TransferTag tag, std::span<const std::byte> in)
{
	ByteReader reader(in);
	alive = reader.get<std::uint8_t>();
	if (tag == migration_tag) {
		live_neighbors = reader.get<std::uint32_t>();
	}
}

LifePattern parse_life_pattern(const std::string& name)
{
	if (name == "glider") return LifePattern::glider;
	if (name == "blinker") return LifePattern::blinker;
	if (name == "glider-blinker" || name == "glider_blinker") return LifePattern::glider_blinker;
	if (name == "random") return LifePattern::random;
	throw std::invalid_argument("unknown pattern '" + name + "'");
}

Board make_board(std::uint64_t width, std::uint64_t height, LifePattern pattern, std::uint64_t seed)
{
	if (width == 0 || height == 0) {
		throw std::invalid_argument("board dimensions must be positive");
	}
	Board board(width * height, 0);
	const auto set = [&](std::uint64_t x, std::uint64_t y) {
		if (x >= width || y >= height) {
			throw std::invalid_argument("pattern does not fit on a " + std::to_string(width) + "x"
			                            + std::to_string(height) + " board");
		}
		board[y * width + x] = 1;
	};
	const auto glider = [&](std::uint64_t x, std::uint64_t y) {
		// moves towards +x, +y
		set(x + 1, y);
		set(x + 2, y + 1);
		set(x, y + 2);
		set(x + 1, y + 2);
		set(x + 2, y + 2);
	};
	const auto blinker = [&](std::uint64_t x, std::uint64_t y) {
		set(x, y);
		set(x, y + 1);
		set(x, y + 2);
	};
	switch (pattern) {
	case LifePattern::glider: glider(1, 1); break;
	case LifePattern::blinker: blinker(width / 2, height / 2 - 1); break;
	case LifePattern::glider_blinker:
		glider(0, 0);
		blinker(width - 2, height - 4);
		break;
	case LifePattern::random: {
		std::mt19937_64 generator(seed);
		for (auto& square : board) {
			square = static_cast<std::uint8_t>(generator() >> 63);
		}
		break;
	}
	}
	return board;
}

GolResult gol_run(const GolOptions& options, const Board& initial)
{
	if (options.width == 0 || options.height == 0) {
		throw std::invalid_argument("board dimensions must be positive");
	}
	if (initial.size() != options.width * options.height) {
		throw std::invalid_argument("initial board does not match the dimensions");
	}
	if (options.ranks < 1) {
		throw std::invalid_argument("need at least one rank");
	}

	struct RankOutput {
		std::vector<std::pair<CellId, std::uint8_t>> cells;
		std::vector<std::size_t> alive;
		std::uint64_t collectives = 0;
		std::uint64_t messages = 0;
	};

	const Topology topology({options.width, options.height, 1}, 0, {false, false, false});
	RunOptions run;
	run.deterministic = options.deterministic_schedule;
	run.schedule_seed = options.schedule_seed;

	auto outputs = run_ranks(
		options.ranks,
		[&](Communicator& comm) {
			Grid<LifeCell> grid(comm, topology, ConstantGeometry<double>{}, 1, options.partition);
			grid.set_message_batching(options.batching);
			for (const CellId id : grid.local_cells()) {
				grid[id].alive = initial[id - 1];
			}

			RankOutput out;
			const auto before = comm.stats();
			for (std::size_t step = 0; step < options.steps; ++step) {
				grid.update_copies_of_remote_neighbors();
				for (const CellId id : grid.local_cells()) {
					std::uint32_t live = 0;
					for (const CellId other : grid.neighbors_of(id)) {
						live += grid[other].alive;
					}
					grid[id].live_neighbors = live;
				}
				std::size_t alive = 0;
				for (const CellId id : grid.local_cells()) {
					LifeCell& cell = grid[id];
					cell.alive = (cell.live_neighbors == 3 || (cell.alive && cell.live_neighbors == 2)) ? 1 : 0;
					alive += cell.alive;
				}
				out.alive.push_back(alive);
			}
			const auto after = comm.stats();
			out.collectives = after.collectives() - before.collectives();
			out.messages = after.messages_on(Channel::exchange) - before.messages_on(Channel::exchange);
			for (const CellId id : grid.local_cells()) {
				out.cells.emplace_back(id, grid[id].alive);
			}
			return out;
		},
		run);

	GolResult result;
	result.board.assign(initial.size(), 0);
	std::vector<std::size_t> counts;
	for (const auto& out : outputs) {
		for (const auto& [id, alive] : out.cells) {
			result.board[id - 1] = alive;
		}
		counts.push_back(out.cells.size());
		result.steady_collectives.push_back(out.collectives);
		result.steady_exchange_messages.push_back(out.messages);
	}
	const double fc = local_cell_fraction(counts);
	for (std::size_t step = 0; step < options.steps; ++step) {
		GolStepStats stats;
		stats.step = step + 1;
		stats.cells = initial.size();
		stats.fc = fc;
		for (const auto& out : outputs) {
			stats.alive += out.alive[step];
		}
		result.steps.push_back(stats);
	}
	return result;
}

} // namespace gridforge::apps
