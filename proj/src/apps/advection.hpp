#pragma once

#include "apps/dump.hpp"
#include "gridforge/grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridforge::apps {

/// Cell-average density plus a scratch accumulator; only density is exchanged.
struct AdvectionCell {
	double density = 0;
	double change = 0;

	std::size_t transfer_size(TransferTag tag) const { return tag == migration_tag ? 16 : 8; }
	void write_transfer(TransferTag tag, Bytes& out) const;
	void read_transfer(TransferTag tag, std::span<const std::byte> in);
};

using AdvectionGrid = Grid<AdvectionCell>;

enum class InitialProfile { gaussian, slab };

struct AdvectionConfig {
	std::uint64_t base = 16;
	int levels = 2;
	double cfl = 0.4;
	std::size_t steps = 100;
	std::size_t adapt_every = 1;   ///< 0 disables adaptation
	double rebalance_fc = 2;       ///< rebalance when f_c >= this; 0 disables
	Eigen::Vector3d velocity{1.0, 0.5, 0.25};
	int ranks = 1;
	InitialProfile profile = InitialProfile::gaussian;
	Eigen::Vector3d center{0.5, 0.5, 0.5}; ///< gaussian center
	std::size_t dump_every = 0;    ///< 0: no dumps kept
	bool deterministic_schedule = false;
	std::uint64_t schedule_seed = 0;
};

/// Throws std::invalid_argument for unusable settings, including CFL >= 1.
void validate(const AdvectionConfig& config);

/*!
Donor-cell upwind advection of a density in the periodic unit cube with a
uniform velocity. One instance per rank.
*/
class AdvectionSolver {
public:
	AdvectionSolver(Communicator& comm, const AdvectionConfig& config);

	AdvectionGrid& grid() noexcept { return grid_; }
	const AdvectionGrid& grid() const noexcept { return grid_; }

	void set_density(const std::function<double(const Eigen::Vector3d& center)>& density);

	/// Refines/unrefines by the density jump across faces, then commits.
	StructureChange adapt();

	/// Rebalances with RCB when the local cell fraction reaches the threshold.
	bool rebalance_if_needed(double threshold);

	/// CFL-limited step shared by all ranks: the only global reduction of a step.
	double stable_time_step();

	/// One split-phase update: inner cells while copies travel, then outer ones.
	void advance(double dt);

	double local_mass() const;
	/// Largest face jump of density (and velocity) at a local cell.
	double refinement_index_of(CellId id);
	std::vector<DumpRecord> local_records() const;

private:
	struct Face {
		CellId other;
		std::size_t dim;
		bool positive_side; ///< `other` lies on the + side
		double area;
	};

	void accumulate(CellId id, double dt);
	std::vector<Face> find_faces(CellId id) const;
	/// Faces of a local cell, cached until the grid structure changes.
	const std::vector<Face>& faces_of(CellId id);

	AdvectionConfig config_;
	AdvectionGrid grid_;
	std::vector<Eigen::Vector3d> lengths_; ///< cell edge lengths per level
	std::vector<double> volumes_;
	std::unordered_map<CellId, std::vector<Face>> faces_;
	std::uint64_t faces_version_ = 0;
};

struct AdvectionStepStats {
	std::size_t step = 0;
	std::size_t cells = 0;
	std::size_t changed = 0; ///< created + removed cells
	double mass = 0;
	double fc = 1;
	double dt = 0;
	bool rebalanced = false;
	std::uint64_t allreduces = 0; ///< issued by rank 0 during the step
};

struct AdvectionResult {
	double initial_mass = 0;
	std::vector<AdvectionStepStats> steps;
	/// Order-independent digest of every cell's dump line, per step.
	std::vector<std::uint64_t> digests;
	/// (step, dump text) for every dump_every-th step and the last one.
	std::vector<std::pair<std::size_t, std::string>> dumps;
};

AdvectionResult advect_run(const AdvectionConfig& config);

/// Same as advect_run without validation; used to probe edge settings.
AdvectionResult advect_run_unchecked(const AdvectionConfig& config);

std::string format_stats_line(std::size_t step, std::size_t cells, double mass, double fc, double dt);

} // namespace gridforge::apps
