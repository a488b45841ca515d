#include "apps/advection.hpp"

#include "gridforge/amr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridforge::apps {

void AdvectionCell::write_transfer(TransferTag tag, Bytes& out) const
{
	ByteWriter writer(out);
	writer.put(density);
	if (tag == migration_tag) {
		writer.put(change);
	}
}

void AdvectionCell::read_transfer(TransferTag tag, std::span<const std::byte> in)
{
	ByteReader reader(in);
	density = reader.get<double>();
	if (tag == migration_tag) {
		change = reader.get<double>();
	}
}

void validate(const AdvectionConfig& config)
{
	if (config.base == 0) {
		throw std::invalid_argument("advect: base must be positive");
	}
	if (config.levels < 0) {
		throw std::invalid_argument("advect: levels must be non-negative");
	}
	if (!(config.cfl > 0) || !(config.cfl < 1)) {
		throw std::invalid_argument("advect: CFL must lie in (0, 1)");
	}
	if (config.ranks < 1) {
		throw std::invalid_argument("advect: need at least one rank");
	}
	if (!config.velocity.allFinite()) {
		throw std::invalid_argument("advect: velocity must be finite");
	}
	if (config.rebalance_fc < 0) {
		throw std::invalid_argument("advect: rebalance threshold must be non-negative");
	}
}

namespace {

Topology make_topology(const AdvectionConfig& config)
{
	return Topology({config.base, config.base, config.base}, config.levels, {true, true, true});
}

ConstantGeometry<double> make_geometry(const AdvectionConfig& config)
{
	return ConstantGeometry<double>(Eigen::Vector3d::Zero(),
	                                Eigen::Vector3d::Constant(1.0 / static_cast<double>(config.base)));
}

/// Coordinates are in [0, extent) and sizes at most extent, so one period of shift suffices.
bool intervals_overlap(std::int64_t a, std::int64_t a_size, std::int64_t b, std::int64_t b_size, std::int64_t extent,
                       bool periodic)
{
	if (a < b + b_size && b < a + a_size) {
		return true;
	}
	if (!periodic) {
		return false;
	}
	return (a < b - extent + b_size && b - extent < a + a_size) || (a < b + extent + b_size && b + extent < a + a_size);
}

bool congruent(std::int64_t a, std::int64_t b, std::int64_t extent, bool periodic)
{
	const std::int64_t difference = a - b;
	return difference == 0 || (periodic && (difference == extent || difference == -extent));
}

/// Digest of one dump line's content: id, level and the exact value bits.
std::uint64_t record_digest(const DumpRecord& record)
{
	std::uint64_t hash = 0xCBF29CE484222325ull;
	const auto mix = [&](std::uint64_t word) {
		for (int k = 0; k < 8; ++k) {
			hash = (hash ^ ((word >> (8 * k)) & 0xFF)) * 0x100000001B3ull;
		}
	};
	mix(record.id);
	mix(static_cast<std::uint64_t>(record.level));
	for (const double value : record.values) {
		mix(std::bit_cast<std::uint64_t>(value));
	}
	return hash;
}

} // namespace

AdvectionSolver::AdvectionSolver(Communicator& comm, const AdvectionConfig& config)
	: config_(config), grid_(comm, make_topology(config), make_geometry(config), 0, PartitionMethod::hilbert())
{
	for (int level = 0; level <= grid_.topology().max_refinement_level(); ++level) {
		lengths_.push_back(grid_.geometry().cell_length(grid_.topology(), level));
		volumes_.push_back(grid_.geometry().cell_volume(grid_.topology(), level));
	}
	grid_.set_unrefine_policy(UnrefinePolicy::all_siblings);
	grid_.set_restrict([](CellId, std::span<const AdvectionCell> children, AdvectionCell& parent) {
		double sum = 0;
		for (const auto& child : children) {
			sum += child.density;
		}
		parent.density = sum / static_cast<double>(children.size());
		parent.change = 0;
	});
}

void AdvectionSolver::set_density(const std::function<double(const Eigen::Vector3d&)>& density)
{
	for (const CellId id : grid_.local_cells()) {
		grid_[id].density = density(grid_.geometry().cell_center(grid_.topology(), id));
		grid_[id].change = 0;
	}
}

const std::vector<AdvectionSolver::Face>& AdvectionSolver::faces_of(CellId id)
{
	const std::uint64_t version = grid_.mesh().structure_version();
	if (version != faces_version_) {
		faces_.clear();
		faces_version_ = version;
	}
	auto it = faces_.find(id);
	if (it == faces_.end()) {
		it = faces_.emplace(id, find_faces(id)).first;
	}
	return it->second;
}

std::vector<AdvectionSolver::Face> AdvectionSolver::find_faces(CellId id) const
{
	const Topology& topology = grid_.topology();
	const Indices a = topology.indices_of(id);
	const int a_level = topology.level_of(id);
	const auto a_size = static_cast<std::int64_t>(topology.cell_size_in_indices(a_level));

	std::vector<Face> faces;
	for (const CellId other : grid_.neighbors_of(id)) {
		const Indices b = topology.indices_of(other);
		const int b_level = topology.level_of(other);
		const auto b_size = static_cast<std::int64_t>(topology.cell_size_in_indices(b_level));
		const Eigen::Vector3d& fine = lengths_[static_cast<std::size_t>(std::max(a_level, b_level))];
		for (std::size_t d = 0; d < 3; ++d) {
			const auto extent = static_cast<std::int64_t>(topology.index_extent(d));
			const bool periodic = topology.is_periodic(d);
			bool across = true;
			for (std::size_t k = 0; k < 3 && across; ++k) {
				if (k != d) {
					across = intervals_overlap(static_cast<std::int64_t>(a[k]), a_size, static_cast<std::int64_t>(b[k]),
					                           b_size, static_cast<std::int64_t>(topology.index_extent(k)),
					                           topology.is_periodic(k));
				}
			}
			if (!across) {
				continue;
			}
			const double area = fine[(d + 1) % 3] * fine[(d + 2) % 3];
			const auto a_lo = static_cast<std::int64_t>(a[d]);
			const auto b_lo = static_cast<std::int64_t>(b[d]);
			if (congruent(b_lo, a_lo + a_size, extent, periodic)) {
				faces.push_back({other, d, true, area});
			}
			if (congruent(a_lo, b_lo + b_size, extent, periodic)) {
				faces.push_back({other, d, false, area});
			}
		}
	}
	return faces;
}

StructureChange AdvectionSolver::adapt()
{
	grid_.update_copies_of_remote_neighbors();
	const Topology& topology = grid_.topology();
	const int max_level = topology.max_refinement_level();

	for (const CellId id : grid_.local_cells()) {
		const double alpha = refinement_index_of(id);
		const int level = topology.level_of(id);
		switch (classify_refinement_index(alpha, level, max_level)) {
		case AdaptDecision::refine:
			if (level < max_level) {
				grid_.refine_completely(id);
			}
			break;
		case AdaptDecision::unrefine:
			if (level > 0) {
				grid_.unrefine(id);
			}
			break;
		case AdaptDecision::keep: break;
		}
	}
	return grid_.stop_refining();
}

double AdvectionSolver::refinement_index_of(CellId id)
{
	const double speed = config_.velocity.norm();
	const double own = grid_[id].density;
	double alpha = 0;
	for (const Face& face : faces_of(id)) {
		alpha = std::max(alpha, relative_jump(own, grid_[face.other].density));
		if (speed > 0) {
			// uniform flow: the shear term is identically zero
			alpha = std::max(alpha, velocity_shear_term(config_.velocity, config_.velocity, speed));
		}
	}
	return alpha;
}

bool AdvectionSolver::rebalance_if_needed(double threshold)
{
	if (threshold <= 0 || grid_.local_cell_fraction() < threshold) {
		return false;
	}
	grid_.balance_load(PartitionMethod::rcb());
	return true;
}

double AdvectionSolver::stable_time_step()
{
	const Topology& topology = grid_.topology();
	double local = std::numeric_limits<double>::infinity();
	int finest = -1;
	for (const CellId id : grid_.local_cells()) {
		finest = std::max(finest, topology.level_of(id));
	}
	if (finest >= 0) {
		const Eigen::Vector3d length = grid_.geometry().cell_length(topology, finest);
		const double rate = (config_.velocity.cwiseAbs().array() / length.array()).sum();
		if (rate > 0) {
			local = config_.cfl / rate;
		}
	}
	const double dt = grid_.comm().allreduce(local, ReduceOp::min);
	return std::isfinite(dt) ? dt : 0.0;
}

void AdvectionSolver::accumulate(CellId id, double dt)
{
	AdvectionCell& cell = grid_[id];
	double change = 0;
	for (const Face& face : faces_of(id)) {
		const double left = face.positive_side ? cell.density : grid_[face.other].density;
		const double right = face.positive_side ? grid_[face.other].density : cell.density;
		const double v = config_.velocity[static_cast<Eigen::Index>(face.dim)];
		const double flux = (v * face.area * dt) * (v >= 0 ? left : right);
		change += face.positive_side ? -flux : flux;
	}
	cell.change = change;
}

void AdvectionSolver::advance(double dt)
{
	const auto& cells = grid_.classify_cells();
	grid_.start_remote_neighbor_copy_updates();
	for (const CellId id : cells.inner) {
		accumulate(id, dt);
	}
	grid_.wait_remote_neighbor_copy_update_receives();
	for (const CellId id : cells.outer) {
		accumulate(id, dt);
	}
	grid_.wait_remote_neighbor_copy_update_sends();

	const Topology& topology = grid_.topology();
	for (const CellId id : grid_.local_cells()) {
		AdvectionCell& cell = grid_[id];
		cell.density += cell.change / volumes_[static_cast<std::size_t>(topology.level_of(id))];
		cell.change = 0;
	}
}

double AdvectionSolver::local_mass() const
{
	const Topology& topology = grid_.topology();
	double mass = 0;
	for (const CellId id : grid_.local_cells()) {
		mass += grid_[id].density * volumes_[static_cast<std::size_t>(topology.level_of(id))];
	}
	return mass;
}

std::vector<DumpRecord> AdvectionSolver::local_records() const
{
	std::vector<DumpRecord> records;
	records.reserve(grid_.local_cells().size());
	for (const CellId id : grid_.local_cells()) {
		records.push_back(make_record(grid_.topology(), id, {grid_[id].density}));
	}
	return records;
}

std::string format_stats_line(std::size_t step, std::size_t cells, double mass, double fc, double dt)
{
	return "step=" + std::to_string(step) + " cells=" + std::to_string(cells) + " mass=" + format_double(mass)
	       + " fc=" + format_double(fc) + " dt=" + format_double(dt);
}

AdvectionResult advect_run(const AdvectionConfig& config)
{
	validate(config);
	return advect_run_unchecked(config);
}

AdvectionResult advect_run_unchecked(const AdvectionConfig& config)
{
	struct RankOutput {
		double initial_mass = 0;
		std::vector<double> mass;
		std::vector<std::uint64_t> digest;
		std::vector<std::vector<DumpRecord>> dumps;
		std::vector<AdvectionStepStats> stats; // filled on rank 0
	};

	const auto profile = [&](const Eigen::Vector3d& x) {
		if (config.profile == InitialProfile::slab) {
			return (x[0] > 0.25 && x[0] < 0.5) ? 2.0 : 1.0;
		}
		const double r2 = (x - config.center).squaredNorm();
		return 1.0 + std::exp(-r2 / (2 * 0.1 * 0.1));
	};
	const auto dump_step = [&](std::size_t step) {
		return step == config.steps || (config.dump_every > 0 && step % config.dump_every == 0);
	};

	RunOptions run;
	run.deterministic = config.deterministic_schedule;
	run.schedule_seed = config.schedule_seed;
	auto outputs = run_ranks(
		config.ranks,
		[&](Communicator& comm) {
			AdvectionSolver solver(comm, config);
			solver.set_density(profile);
			if (config.adapt_every > 0) {
				for (int k = 0; k < config.levels; ++k) {
					solver.adapt();
					solver.set_density(profile);
				}
			}
			RankOutput out;
			out.initial_mass = solver.local_mass();

			for (std::size_t step = 1; step <= config.steps; ++step) {
				const auto before = comm.stats();
				AdvectionStepStats stats;
				stats.step = step;
				if (config.adapt_every > 0 && step % config.adapt_every == 0) {
					const auto change = solver.adapt();
					stats.changed = change.created.size() + change.removed.size();
				}
				stats.rebalanced = solver.rebalance_if_needed(config.rebalance_fc);
				stats.dt = solver.stable_time_step();
				solver.advance(stats.dt);
				stats.allreduces = comm.stats().allreduces - before.allreduces;
				stats.cells = solver.grid().mesh().cell_count();
				stats.fc = solver.grid().local_cell_fraction();

				out.mass.push_back(solver.local_mass());
				auto records = solver.local_records();
				std::uint64_t digest = 0;
				for (const auto& record : records) {
					digest += record_digest(record);
				}
				out.digest.push_back(digest);
				if (dump_step(step)) {
					out.dumps.push_back(std::move(records));
				}
				if (comm.rank() == 0) {
					out.stats.push_back(stats);
				}
			}
			return out;
		},
		run);

	const Topology topology = make_topology(config);
	AdvectionResult result;
	for (const auto& out : outputs) {
		result.initial_mass += out.initial_mass;
	}
	result.steps = outputs.front().stats;
	for (std::size_t k = 0; k < config.steps; ++k) {
		double mass = 0;
		std::uint64_t digest = 0;
		for (const auto& out : outputs) {
			mass += out.mass[k];
			digest += out.digest[k];
		}
		result.steps[k].mass = mass;
		result.digests.push_back(digest);
	}
	std::size_t dump_index = 0;
	for (std::size_t step = 1; step <= config.steps; ++step) {
		if (!dump_step(step)) {
			continue;
		}
		std::vector<DumpRecord> records;
		for (auto& out : outputs) {
			auto& part = out.dumps[dump_index];
			std::move(part.begin(), part.end(), std::back_inserter(records));
		}
		result.dumps.emplace_back(step, format_dump(topology, std::move(records)));
		++dump_index;
	}
	return result;
}

} // namespace gridforge::apps
