#include "apps/advection.hpp"
#include "apps/benchmarks.hpp"
#include "apps/dump.hpp"
#include "apps/game_of_life.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

using namespace gridforge;
using namespace gridforge::apps;

namespace {

PartitionMethod parse_method(const std::string& name, std::uint64_t seed)
{
	PartitionMethod method{parse_partition_kind(name), seed};
	return method;
}

Batching parse_batching(const std::string& name)
{
	if (name == "per-rank" || name == "rank") return Batching::per_rank;
	if (name == "per-cell" || name == "cell") return Batching::per_cell;
	throw std::invalid_argument("unknown batching '" + name + "' (per-rank or per-cell)");
}

Eigen::Vector3d parse_vector(const std::string& text)
{
	Eigen::Vector3d v;
	double x = 0, y = 0, z = 0;
	char tail = 0;
	if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &x, &y, &z, &tail) != 3) {
		throw std::invalid_argument("expected three comma-separated numbers");
	}
	v << x, y, z;
	return v;
}

int run_gol(const GolOptions& base_options, const std::string& partition, const std::string& pattern,
            std::uint64_t seed, const std::string& batching, const std::string& dump_path)
{
	GolOptions options = base_options;
	options.partition = parse_method(partition, seed);
	options.batching = parse_batching(batching);
	const Board initial = make_board(options.width, options.height, parse_life_pattern(pattern), seed);
	const GolResult result = gol_run(options, initial);
	for (const auto& step : result.steps) {
		std::cout << format_stats_line(step.step, step.cells, static_cast<double>(step.alive), step.fc, 1.0)
		          << '\n';
	}
	for (std::uint64_t y = 0; y < options.height; ++y) {
		for (std::uint64_t x = 0; x < options.width; ++x) {
			std::cout << (result.board[y * options.width + x] ? '#' : '.');
		}
		std::cout << '\n';
	}
	if (!dump_path.empty()) {
		const Topology topology({options.width, options.height, 1}, 0, {false, false, false});
		std::vector<DumpRecord> records;
		for (std::size_t k = 0; k < result.board.size(); ++k) {
			records.push_back(make_record(topology, k + 1, {static_cast<double>(result.board[k])}));
		}
		write_file(dump_path, format_dump(topology, std::move(records)));
	}
	return 0;
}

int run_advect(const AdvectionConfig& config, const std::string& dump_dir, bool vtk)
{
	const AdvectionResult result = advect_run(config);
	for (const auto& step : result.steps) {
		std::cout << format_stats_line(step.step, step.cells, step.mass, step.fc, step.dt) << '\n';
	}
	const double drift = std::abs(result.steps.empty() ? 0.0 : result.steps.back().mass - result.initial_mass)
	                     / result.initial_mass;
	std::cout << "mass_drift=" << format_double(drift) << '\n';
	if (!dump_dir.empty()) {
		std::filesystem::create_directories(dump_dir);
		const Topology topology({config.base, config.base, config.base}, config.levels, {true, true, true});
		const ConstantGeometry<double> geometry(Eigen::Vector3d::Zero(),
		                                        Eigen::Vector3d::Constant(1.0 / static_cast<double>(config.base)));
		for (const auto& [step, text] : result.dumps) {
			char name[32];
			std::snprintf(name, sizeof name, "step_%06zu", step);
			const std::string stem = (std::filesystem::path(dump_dir) / name).string();
			write_file(stem + ".dump", text);
			if (vtk) {
				write_file(stem + ".vtk", format_vtk(topology, geometry, parse_dump(text).records, {"density"}));
			}
		}
	}
	return 0;
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"gridforge: distributed cell-based AMR grid demos and benchmarks"};
	app.require_subcommand(1);

	GolOptions gol;
	std::string gol_partition = "HILBERT_SFC";
	std::string gol_pattern = "glider-blinker";
	std::string gol_batching = "per-rank";
	std::string gol_dump;
	std::uint64_t gol_seed = 0;
	auto* gol_cmd = app.add_subcommand("gol", "distributed Game of Life");
	gol_cmd->add_option("--width", gol.width, "board width")->capture_default_str();
	gol_cmd->add_option("--height", gol.height, "board height")->capture_default_str();
	gol_cmd->add_option("--steps", gol.steps, "generations")->capture_default_str();
	gol_cmd->add_option("--ranks", gol.ranks, "logical ranks")->capture_default_str();
	gol_cmd->add_option("--partition", gol_partition, "NONE, RANDOM, BLOCK, RCB or HILBERT_SFC")->capture_default_str();
	gol_cmd->add_option("--pattern", gol_pattern, "glider, blinker, glider-blinker or random")->capture_default_str();
	gol_cmd->add_option("--seed", gol_seed, "seed of RANDOM partitions and random patterns")->required();
	gol_cmd->add_option("--batching", gol_batching, "per-rank or per-cell")->capture_default_str();
	gol_cmd->add_option("--dump", gol_dump, "write the final board as a dump file");

	AdvectionConfig advect;
	std::string velocity = "1,0.5,0.25";
	std::string dump_dir;
	std::string profile = "gaussian";
	std::string center = "0.5,0.5,0.5";
	bool vtk = false;
	auto* advect_cmd = app.add_subcommand("advect", "conservative advection with runtime AMR");
	advect_cmd->add_option("--base", advect.base, "level-0 cells per dimension")->capture_default_str();
	advect_cmd->add_option("--levels", advect.levels, "maximum refinement level")->capture_default_str();
	advect_cmd->add_option("--cfl", advect.cfl, "Courant number, below 1")->capture_default_str();
	advect_cmd->add_option("--steps", advect.steps, "time steps")->capture_default_str();
	advect_cmd->add_option("--adapt-every", advect.adapt_every, "adapt every N steps, 0 = never")->capture_default_str();
	advect_cmd->add_option("--rebalance-fc", advect.rebalance_fc, "rebalance when f_c reaches this, 0 = never")
		->capture_default_str();
	advect_cmd->add_option("--ranks", advect.ranks, "logical ranks")->capture_default_str();
	advect_cmd->add_option("--velocity", velocity, "uniform velocity vx,vy,vz")->capture_default_str();
	advect_cmd->add_option("--profile", profile, "gaussian or slab")->capture_default_str();
	advect_cmd->add_option("--center", center, "gaussian center cx,cy,cz")->capture_default_str();
	advect_cmd->add_option("--dump-dir", dump_dir, "directory for dump files");
	advect_cmd->add_option("--dump-every", advect.dump_every, "dump every N steps (the last step always)")
		->capture_default_str();
	advect_cmd->add_flag("--vtk", vtk, "also write legacy VTK files next to the dumps");

	auto* bench_cmd = app.add_subcommand("bench", "benchmarks");
	bench_cmd->require_subcommand(1);
	AmrSpeedOptions amr;
	auto* amr_cmd = bench_cmd->add_subcommand("amr-speed", "refine every cell until the target size");
	amr_cmd->add_option("--base", amr.base, "level-0 cells per dimension")->capture_default_str();
	amr_cmd->add_option("--target", amr.target, "final cells per dimension")->capture_default_str();
	amr_cmd->add_option("--ranks", amr.ranks, "logical ranks")->capture_default_str();
	amr_cmd->add_option("--neighborhood", amr.neighborhood, "neighborhood size")->capture_default_str();

	ExchangeBenchOptions exchange;
	std::string exchange_batching = "per-rank";
	auto* exchange_cmd = bench_cmd->add_subcommand("exchange", "remote neighbor update throughput");
	exchange_cmd->add_option("--cells", exchange.cells, "cells per dimension")->capture_default_str();
	exchange_cmd->add_option("--bytes", exchange.bytes, "payload bytes per cell")->capture_default_str();
	exchange_cmd->add_option("--ranks", exchange.ranks, "logical ranks")->capture_default_str();
	exchange_cmd->add_option("--batching", exchange_batching, "per-rank or per-cell")->capture_default_str();
	exchange_cmd->add_option("--repetitions", exchange.repetitions, "updates to time")->capture_default_str();

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		return app.exit(e);
	}

	try {
		if (*gol_cmd) {
			return run_gol(gol, gol_partition, gol_pattern, gol_seed, gol_batching, gol_dump);
		}
		if (*advect_cmd) {
			advect.velocity = parse_vector(velocity);
			advect.center = parse_vector(center);
			if (profile == "gaussian") {
				advect.profile = InitialProfile::gaussian;
			} else if (profile == "slab") {
				advect.profile = InitialProfile::slab;
			} else {
				throw std::invalid_argument("unknown profile '" + profile + "'");
			}
			return run_advect(advect, dump_dir, vtk);
		}
		if (*amr_cmd) {
			const AmrSpeedResult result = bench_amr_speed(amr);
			for (std::size_t k = 0; k < result.created_per_round.size(); ++k) {
				std::cout << "round=" << k + 1 << " created=" << result.created_per_round[k] << '\n';
			}
			std::cout << "created=" << result.created << " cells=" << result.final_cells
			          << " seconds=" << format_double(result.seconds)
			          << " created_per_second=" << format_double(result.cells_per_second()) << '\n';
			return 0;
		}
		if (*exchange_cmd) {
			exchange.batching = parse_batching(exchange_batching);
			const ExchangeBenchResult result = bench_exchange(exchange);
			std::cout << "messages=" << result.messages << " bytes=" << result.bytes
			          << " collectives=" << result.collectives << " seconds=" << format_double(result.seconds)
			          << '\n';
			return 0;
		}
	} catch (const std::exception& e) {
		std::cerr << "gridforge: " << e.what() << '\n';
		return 1;
	}
	return 0;
}
