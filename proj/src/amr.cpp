#include "gridforge/amr.hpp"

#include "gridforge/bytes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace gridforge {

namespace {

double positive_min(double a, double b, const char* what)
{
	const double hat = std::min(a, b);
	if (!(hat > 0)) {
		throw std::domain_error(std::string("refinement index: non-positive minimum of ") + what);
	}
	return hat;
}

void sort_unique(std::vector<CellId>& ids)
{
	std::sort(ids.begin(), ids.end());
	ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
}

/// Post-commit level of whatever covers `position` at level <= `level`,
/// or nothing if the position is covered by finer cells.
std::optional<int> covering_level(const Mesh& mesh, const std::set<CellId>& refined, const Indices& position,
                                  int level)
{
	const Topology& topology = mesh.topology();
	for (int l = level; l >= 0; --l) {
		const std::uint64_t size = topology.cell_size_in_indices(l);
		Indices corner = position;
		for (std::size_t d = 0; d < 3; ++d) {
			corner[d] -= corner[d] % size;
		}
		const CellId id = topology.try_id_from(l, corner);
		if (id != error_cell && mesh.exists(id)) {
			return refined.contains(id) ? l + 1 : l;
		}
	}
	return std::nullopt;
}

/// Positions on the level-`level` lattice of the given raw index box (inclusive).
template <typename Visit>
bool all_positions(const Topology& topology, const RawIndices& lo, const RawIndices& hi, int level, Visit&& visit)
{
	const auto step = static_cast<std::int64_t>(topology.cell_size_in_indices(level));
	RawIndices raw;
	for (raw[2] = lo[2]; raw[2] <= hi[2]; raw[2] += step) {
		for (raw[1] = lo[1]; raw[1] <= hi[1]; raw[1] += step) {
			for (raw[0] = lo[0]; raw[0] <= hi[0]; raw[0] += step) {
				const auto position = topology.wrap_indices(raw);
				if (position && !visit(*position)) {
					return false;
				}
			}
		}
	}
	return true;
}

bool unrefinement_keeps_balance(const Mesh& mesh, const std::set<CellId>& refined, CellId parent)
{
	const Topology& topology = mesh.topology();
	const int child_level = topology.level_of(parent) + 1;
	const Indices corner = topology.indices_of(parent);
	const auto size = static_cast<std::int64_t>(topology.cell_size_in_indices(child_level - 1));
	const auto step = size / 2;
	const auto acceptable = [&](const Indices& position) {
		const auto level = covering_level(mesh, refined, position, child_level);
		return level && *level <= child_level;
	};

	RawIndices base{static_cast<std::int64_t>(corner[0]), static_cast<std::int64_t>(corner[1]),
	                static_cast<std::int64_t>(corner[2])};
	const unsigned n = mesh.neighborhood_size();
	if (n > 0) {
		RawIndices lo = base;
		RawIndices hi = base;
		for (std::size_t d = 0; d < 3; ++d) {
			lo[d] -= static_cast<std::int64_t>(n) * size;
			hi[d] += size - step + static_cast<std::int64_t>(n) * size;
		}
		return all_positions(topology, lo, hi, child_level, acceptable);
	}

	// face slabs: one child layer on each side, two by two positions
	for (std::size_t d = 0; d < 3; ++d) {
		for (const std::int64_t offset : {-step, size}) {
			RawIndices lo = base;
			RawIndices hi = base;
			for (std::size_t k = 0; k < 3; ++k) {
				hi[k] += size - step;
			}
			lo[d] = hi[d] = base[d] + offset;
			if (!all_positions(topology, lo, hi, child_level, acceptable)) {
				return false;
			}
		}
	}
	return true;
}

/// Parents of the requested cells, subject to the policy.
std::vector<CellId> requested_parents(const Topology& topology, std::vector<CellId> cells, UnrefinePolicy policy)
{
	sort_unique(cells);
	std::map<CellId, std::size_t> votes;
	for (const CellId id : cells) {
		++votes[*topology.parent_of(id)];
	}
	std::vector<CellId> parents;
	for (const auto& [parent, count] : votes) {
		if (policy == UnrefinePolicy::any_sibling || count == 8) {
			parents.push_back(parent);
		}
	}
	return parents;
}

StructureChange finish(const Mesh& mesh, std::set<CellId> refined, std::vector<CellId> parents, std::size_t sweeps)
{
	const Topology& topology = mesh.topology();
	StructureChange change;
	change.sweeps = sweeps;
	change.refined.assign(refined.begin(), refined.end());
	sort_unique(parents);
	change.unrefined = admissible_unrefinements(mesh, refined, parents);

	for (const CellId id : change.refined) {
		change.removed.push_back(id);
		for (const CellId child : topology.children_of(id)) {
			change.created.push_back(child);
		}
	}
	for (const CellId parent : change.unrefined) {
		change.created.push_back(parent);
		for (const CellId child : topology.children_of(parent)) {
			change.removed.push_back(child);
		}
	}
	sort_unique(change.created);
	sort_unique(change.removed);
	return change;
}

void put_ids(ByteWriter& out, const std::vector<CellId>& ids)
{
	out.put(static_cast<std::uint64_t>(ids.size()));
	for (const CellId id : ids) {
		out.put(static_cast<std::uint64_t>(id));
	}
}

void get_ids(ByteReader& in, std::vector<CellId>& ids)
{
	const auto count = in.get<std::uint64_t>();
	for (std::uint64_t k = 0; k < count; ++k) {
		ids.push_back(in.get<std::uint64_t>());
	}
}

} // namespace

double relative_jump(double a, double b)
{
	return std::abs(a - b) / positive_min(a, b, "a scalar");
}

double velocity_shear_term(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double wave_speed)
{
	const double floor = 0.01 * wave_speed;
	const double v_min = std::min(a.squaredNorm(), b.squaredNorm()) + floor * floor;
	if (!(v_min > 0)) {
		throw std::domain_error("refinement index: non-positive velocity scale");
	}
	return (a - b).squaredNorm() / v_min;
}

double refinement_index(const PlasmaState& a, const PlasmaState& b, double wave_speed, double vacuum_permeability)
{
	if (!(vacuum_permeability > 0)) {
		throw std::domain_error("refinement index: vacuum permeability must be positive");
	}
	const double rho_hat = positive_min(a.density, b.density, "density");
	const double energy_hat = positive_min(a.total_energy, b.total_energy, "total energy");
	const double rho_energy_hat = positive_min(a.density * a.total_energy, b.density * b.total_energy,
	                                           "density times total energy");
	const double field_hat = positive_min(a.magnetic_field.norm(), b.magnetic_field.norm(), "magnetic field");

	const double terms[] = {
		std::abs(a.density - b.density) / rho_hat,
		std::abs(a.total_energy - b.total_energy) / energy_hat,
		(a.momentum - b.momentum).squaredNorm() / (2 * rho_energy_hat),
		(a.magnetic_field - b.magnetic_field).squaredNorm() / (2 * vacuum_permeability * energy_hat),
		(a.magnetic_field - b.magnetic_field).norm() / field_hat,
		velocity_shear_term(a.velocity, b.velocity, wave_speed),
	};
	return *std::max_element(std::begin(terms), std::end(terms));
}

double refine_threshold(int level, int max_level)
{
	if (max_level <= 0) {
		return std::numeric_limits<double>::infinity();
	}
	return 0.02 * (level + 1) / max_level;
}

double unrefine_threshold(int level, int max_level)
{
	return refine_threshold(level, max_level) / 2;
}

AdaptDecision classify_refinement_index(double alpha, int level, int max_level)
{
	if (alpha > refine_threshold(level, max_level)) {
		return AdaptDecision::refine;
	}
	if (alpha < unrefine_threshold(level, max_level)) {
		return AdaptDecision::unrefine;
	}
	return AdaptDecision::keep;
}

void AdaptationQueue::refine(const Mesh& mesh, CellId id)
{
	if (!mesh.exists(id)) {
		throw NoSuchCell(id);
	}
	if (!mesh.is_local(id)) {
		throw NotLocal(id);
	}
	if (mesh.topology().level_of(id) >= mesh.topology().max_refinement_level()) {
		throw std::invalid_argument("refine: cell " + std::to_string(id) + " is at the maximum refinement level");
	}
	if (unrefine_cells_.contains(id)) {
		throw std::logic_error("refine: cell " + std::to_string(id) + " is already queued for unrefinement");
	}
	refine_.insert(id);
}

void AdaptationQueue::unrefine(const Mesh& mesh, CellId id)
{
	if (!mesh.exists(id)) {
		throw NoSuchCell(id);
	}
	if (!mesh.is_local(id)) {
		throw NotLocal(id);
	}
	const auto parent = mesh.topology().parent_of(id);
	if (!parent) {
		throw std::invalid_argument("unrefine: cell " + std::to_string(id) + " has no parent");
	}
	if (refine_.contains(id)) {
		throw std::logic_error("unrefine: cell " + std::to_string(id) + " is already queued for refinement");
	}
	unrefine_cells_.insert(id);
	unrefine_parents_.insert(*parent);
}

void AdaptationQueue::clear()
{
	refine_.clear();
	unrefine_cells_.clear();
	unrefine_parents_.clear();
}

void adapt_by_index(const Mesh& mesh, std::span<const std::pair<CellId, double>> cell_alpha, AdaptationQueue& queue)
{
	const Topology& topology = mesh.topology();
	const int max_level = topology.max_refinement_level();
	for (const auto& [id, alpha] : cell_alpha) {
		const int level = topology.level_of(id);
		switch (classify_refinement_index(alpha, level, max_level)) {
		case AdaptDecision::refine:
			if (level < max_level) {
				queue.refine(mesh, id);
			}
			break;
		case AdaptDecision::unrefine:
			if (level > 0) {
				queue.unrefine(mesh, id);
			}
			break;
		case AdaptDecision::keep: break;
		}
	}
}

std::vector<CellId> forced_refinements(const Mesh& mesh, CellId refining)
{
	const Topology& topology = mesh.topology();
	const int level = topology.level_of(refining);
	if (level == 0 || mesh.cells_on_level(level - 1) == 0) {
		return {};
	}
	std::vector<CellId> forced;
	const unsigned n = mesh.neighborhood_size();
	if (n == 0) {
		for (const CellId other : mesh.face_neighbors(refining)) {
			if (topology.level_of(other) < level) {
				forced.push_back(other);
			}
		}
	} else {
		// a coarser cell is forced exactly when its own neighborhood reaches `refining`
		const std::uint64_t margin = topology.cell_size_in_indices(level - 1) * n;
		for (const CellId other : mesh.cells_near(refining, margin, level - 1)) {
			if (in_box_neighborhood(topology, n, other, refining)) {
				forced.push_back(other);
			}
		}
	}
	sort_unique(forced);
	return forced;
}

std::vector<CellId> admissible_unrefinements(const Mesh& mesh, const std::set<CellId>& refined,
                                             std::span<const CellId> parents)
{
	const Topology& topology = mesh.topology();
	std::vector<CellId> accepted;
	for (const CellId parent : parents) {
		bool ok = true;
		for (const CellId child : topology.children_of(parent)) {
			if (!mesh.exists(child) || refined.contains(child)) {
				ok = false;
				break;
			}
		}
		if (ok && unrefinement_keeps_balance(mesh, refined, parent)) {
			accepted.push_back(parent);
		}
	}
	return accepted;
}

StructureChange synchronize_adaptation(Communicator& comm, const Mesh& mesh, const AdaptationQueue& queue,
                                       UnrefinePolicy policy)
{
	std::set<CellId> refined;
	std::vector<CellId> fresh_local(queue.refine_requests().begin(), queue.refine_requests().end());
	std::vector<CellId> unrefine_cells;
	std::size_t sweeps = 0;

	for (bool first = true;; first = false) {
		Bytes block;
		ByteWriter out(block);
		put_ids(out, fresh_local);
		if (first) {
			put_ids(out, std::vector<CellId>(queue.unrefine_cells().begin(), queue.unrefine_cells().end()));
		}
		const auto blocks = comm.allgather_variable(block);
		++sweeps;

		std::vector<CellId> fresh;
		for (const auto& bytes : blocks) {
			ByteReader in(bytes);
			get_ids(in, fresh);
			if (first) {
				get_ids(in, unrefine_cells);
			}
		}
		sort_unique(fresh);
		// an empty round on every rank is the global decision to stop
		if (fresh.empty()) {
			break;
		}
		refined.insert(fresh.begin(), fresh.end());

		fresh_local.clear();
		for (const CellId id : fresh) {
			for (const CellId other : forced_refinements(mesh, id)) {
				if (mesh.owner_of(other) == mesh.rank() && !refined.contains(other)) {
					fresh_local.push_back(other);
				}
			}
		}
		sort_unique(fresh_local);
	}
	return finish(mesh, std::move(refined), requested_parents(mesh.topology(), std::move(unrefine_cells), policy),
	              sweeps);
}

StructureChange plan_adaptation(const Mesh& mesh, const AdaptationQueue& queue, UnrefinePolicy policy)
{
	std::set<CellId> refined;
	std::vector<CellId> fresh(queue.refine_requests().begin(), queue.refine_requests().end());
	std::size_t sweeps = 0;
	while (true) {
		++sweeps;
		if (fresh.empty()) {
			break;
		}
		refined.insert(fresh.begin(), fresh.end());
		std::vector<CellId> next;
		for (const CellId id : fresh) {
			for (const CellId other : forced_refinements(mesh, id)) {
				if (!refined.contains(other)) {
					next.push_back(other);
				}
			}
		}
		sort_unique(next);
		fresh = std::move(next);
	}
	return finish(mesh, std::move(refined),
	              requested_parents(mesh.topology(),
	                                std::vector<CellId>(queue.unrefine_cells().begin(), queue.unrefine_cells().end()),
	                                policy),
	              sweeps);
}

} // namespace gridforge
