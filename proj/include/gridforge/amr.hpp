#pragma once

#include "gridforge/mesh.hpp"
#include "gridforge/transport.hpp"

#include <Eigen/Core>

#include <set>
#include <span>
#include <vector>

namespace gridforge {

/// Conservative plasma state of one cell as seen by the refinement index.
struct PlasmaState {
	double density = 1;                                    ///< rho
	double total_energy = 1;                               ///< U_1
	Eigen::Vector3d momentum = Eigen::Vector3d::Zero();       ///< p
	Eigen::Vector3d magnetic_field = Eigen::Vector3d::Zero(); ///< perturbed B_1
	Eigen::Vector3d velocity = Eigen::Vector3d::Zero();       ///< v
};

/// |a - b| / min(a, b); throws std::domain_error unless both are positive.
double relative_jump(double a, double b);

/// |v_a - v_b|^2 / (min(|v_a|^2, |v_b|^2) + (0.01 wave_speed)^2).
double velocity_shear_term(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double wave_speed);

/*!
Refinement index of the interface between two cells: the largest of the
relative jumps in density, total energy, momentum, magnetic energy, magnetic
field magnitude and velocity shear. Minimums over the two cells ("hats") are
used as denominators; a non-positive one throws std::domain_error.
*/
double refinement_index(const PlasmaState& a, const PlasmaState& b, double wave_speed, double vacuum_permeability);

/// A cell is refined above 0.02 (l + 1) / L ...
double refine_threshold(int level, int max_level);
/// ... and unrefined below half of that.
double unrefine_threshold(int level, int max_level);

enum class AdaptDecision { keep, refine, unrefine };

/// When a sibling group's unrefine requests replace it by its parent.
enum class UnrefinePolicy {
	any_sibling,  ///< one request unrefines the whole group
	all_siblings, ///< every sibling must have been queued
};

/// Threshold comparison only; level bounds are not applied.
AdaptDecision classify_refinement_index(double alpha, int level, int max_level);

/*!
Pending refinement and unrefinement requests of one rank.

Unrefine requests are stored as the parent of the sibling group so that all
eight siblings are replaced together.
*/
class AdaptationQueue {
public:
	void refine(const Mesh& mesh, CellId id);
	void unrefine(const Mesh& mesh, CellId id);
	void clear();
	bool empty() const noexcept { return refine_.empty() && unrefine_parents_.empty(); }

	const std::set<CellId>& refine_requests() const noexcept { return refine_; }
	const std::set<CellId>& unrefine_parents() const noexcept { return unrefine_parents_; }
	const std::set<CellId>& unrefine_cells() const noexcept { return unrefine_cells_; }

private:
	std::set<CellId> refine_;
	std::set<CellId> unrefine_cells_;
	std::set<CellId> unrefine_parents_;
};

/// Queues requests from per-cell refinement indices (cell alpha = max over its faces).
void adapt_by_index(const Mesh& mesh, std::span<const std::pair<CellId, double>> cell_alpha, AdaptationQueue& queue);

/// Global outcome of one adaptation round; identical on every rank.
struct StructureChange {
	std::vector<CellId> refined;   ///< cells replaced by their children, ascending
	std::vector<CellId> unrefined; ///< parents replacing their children, ascending
	std::vector<CellId> created;   ///< ascending
	std::vector<CellId> removed;   ///< ascending
	std::size_t sweeps = 0;        ///< induced refinement rounds, including the final empty one
};

/*!
Existing cells coarser than `refining` that must be refined along with it,
otherwise a level difference of two would appear between neighbors.
*/
std::vector<CellId> forced_refinements(const Mesh& mesh, CellId refining);

/// Parents whose unrefinement keeps the mesh balanced after `refined` is applied.
std::vector<CellId> admissible_unrefinements(const Mesh& mesh, const std::set<CellId>& refined,
                                             std::span<const CellId> parents);

/*!
Collective. Starting from every rank's queue, exchanges newly marked cells
after each round of induced refinement until no rank marks anything new, then
drops unrefinements that would break balance. Does not modify the mesh.
*/
StructureChange synchronize_adaptation(Communicator& comm, const Mesh& mesh, const AdaptationQueue& queue,
                                       UnrefinePolicy policy = UnrefinePolicy::any_sibling);

/// All the above without communication, for a single process owning everything.
StructureChange plan_adaptation(const Mesh& mesh, const AdaptationQueue& queue,
                                UnrefinePolicy policy = UnrefinePolicy::any_sibling);

} // namespace gridforge
