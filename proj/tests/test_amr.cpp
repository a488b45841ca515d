#include "gridforge/amr.hpp"
#include "gridforge/grid.hpp"
#include "oracles.hpp"
#include "random_mesh.hpp"

#include <doctest.h>

#include <cmath>

using namespace gridforge;

namespace {

using DoubleGrid = Grid<double>;

/// Runs `body(grid)` on one rank over a fresh grid.
template <typename Body>
void on_one_rank(const Topology& t, unsigned n, Body body)
{
	run_ranks(1, [&](Communicator& comm) {
		DoubleGrid grid(comm, t, ConstantGeometry<double>{}, n);
		body(grid);
	});
}

double total(const DoubleGrid& grid)
{
	double sum = 0;
	for (const CellId id : grid.local_cells()) {
		sum += grid[id] * grid.geometry().cell_volume(grid.topology(), grid.topology().level_of(id));
	}
	return sum;
}

PlasmaState plasma(double rho)
{
	PlasmaState s;
	s.density = rho;
	s.total_energy = 3;
	s.momentum = Eigen::Vector3d(1, 2, 3);
	s.magnetic_field = Eigen::Vector3d(0.5, -1, 2);
	s.velocity = Eigen::Vector3d(1, 1, 0);
	return s;
}

} // namespace

TEST_CASE("refinement index of simple states")
{
	CHECK(refinement_index(plasma(1), plasma(1), 1, 1) == 0);
	CHECK(refinement_index(plasma(1), plasma(2), 1, 1) == doctest::Approx(1));
	CHECK(relative_jump(3, 2) == doctest::Approx(0.5));
	CHECK_THROWS_AS(relative_jump(0, 2), std::domain_error);
	PlasmaState bad = plasma(1);
	bad.total_energy = -1;
	CHECK_THROWS_AS(refinement_index(bad, plasma(1), 1, 1), std::domain_error);
}

TEST_CASE("refinement index term by term")
{
	PlasmaState a;
	a.density = 2;
	a.total_energy = 4;
	a.momentum = Eigen::Vector3d(0, 0, 0);
	a.magnetic_field = Eigen::Vector3d(1, 0, 0);
	a.velocity = Eigen::Vector3d(2, 0, 0);
	PlasmaState b = a;
	const double mu0 = 2;

	SUBCASE("energy")
	{
		b.total_energy = 5;
		CHECK(refinement_index(a, b, 1, mu0) == doctest::Approx(0.25));
	}
	SUBCASE("momentum over the smaller density-energy product")
	{
		b.momentum = Eigen::Vector3d(0, 3, 4); // (dp)^2 = 25, hat(rho U) = 8
		CHECK(refinement_index(a, b, 1, mu0) == doctest::Approx(25.0 / 16));
	}
	SUBCASE("magnetic energy and magnitude")
	{
		b.magnetic_field = Eigen::Vector3d(1, 2, 0); // (dB)^2 = 4, |dB| = 2, hat|B| = 1
		CHECK(refinement_index(a, b, 1, mu0) == doctest::Approx(std::max(4.0 / (2 * mu0 * 4), 2.0)));
	}
	SUBCASE("velocity shear with the wave speed floor")
	{
		b.velocity = Eigen::Vector3d(0, 0, 0); // (dv)^2 = 4, v_min = 0 + (0.01 * 10)^2
		CHECK(refinement_index(a, b, 10, mu0) == doctest::Approx(4 / 0.01));
		CHECK(velocity_shear_term(a.velocity, a.velocity, 0) == 0);
	}
}

TEST_CASE("thresholds")
{
	CHECK(refine_threshold(0, 4) == doctest::Approx(0.005));
	CHECK(unrefine_threshold(0, 4) == doctest::Approx(0.0025));
	CHECK(classify_refinement_index(0.015, 0, 4) == AdaptDecision::refine);
	CHECK(classify_refinement_index(0.025, 0, 4) == AdaptDecision::refine);
	CHECK(classify_refinement_index(0.002, 0, 4) == AdaptDecision::unrefine);
	CHECK(classify_refinement_index(0.004, 0, 4) == AdaptDecision::keep);
	for (int level = 0; level < 4; ++level) {
		CHECK(classify_refinement_index(0.0201, level, 4) == AdaptDecision::refine);
	}
}

TEST_CASE("adapt_by_index queues by threshold and level bounds")
{
	Mesh mesh(Topology({2, 1, 1}, 1), 1, 0, 1);
	mesh.assign({{1, 0}, {2, 0}});
	mesh.apply_refinement(std::vector<CellId>{2}, {});
	AdaptationQueue queue;
	// 9 is already at the maximum level
	const std::vector<std::pair<CellId, double>> alpha{{1, 0.2}, {5, 0.001}, {6, 0.02}, {9, 0.2}};
	adapt_by_index(mesh, alpha, queue);
	CHECK(queue.refine_requests() == std::set<CellId>{1});
	CHECK(queue.unrefine_parents() == std::set<CellId>{2});
	CHECK(queue.unrefine_cells() == std::set<CellId>{5});
}

TEST_CASE("request validation")
{
	on_one_rank(Topology({1, 1, 1}, 0), 1, [](DoubleGrid& grid) {
		CHECK_THROWS_AS(grid.refine_completely(1), std::invalid_argument);
	});
	on_one_rank(Topology({1, 1, 1}, 2), 1, [](DoubleGrid& grid) {
		CHECK_THROWS_AS(grid.unrefine(1), std::invalid_argument);
		CHECK_THROWS_AS(grid.refine_completely(7), NoSuchCell);
		grid.refine_completely(1);
		grid.stop_refining();
		grid.unrefine(2);
		CHECK_THROWS_AS(grid.refine_completely(2), std::logic_error);
		grid.refine_completely(3);
		CHECK_THROWS_AS(grid.unrefine(3), std::logic_error);
	});
	run_ranks(2, [](Communicator& comm) {
		DoubleGrid grid(comm, Topology({2, 1, 1}, 1), ConstantGeometry<double>{}, 1, PartitionMethod::block());
		const CellId remote = comm.rank() == 0 ? 2 : 1;
		CHECK_THROWS_AS(grid.refine_completely(remote), NotLocal);
	});
}

TEST_CASE("refining the root creates its eight children")
{
	on_one_rank(Topology({1, 1, 1}, 2), 1, [](DoubleGrid& grid) {
		grid.refine_completely(1);
		const auto change = grid.stop_refining();
		CHECK(change.created == std::vector<CellId>{2, 3, 4, 5, 6, 7, 8, 9});
		CHECK(change.removed == std::vector<CellId>{1});
		CHECK_FALSE(grid.exists(1));
		CHECK(grid.mesh().cell_count() == 8);
	});
}

TEST_CASE("an empty commit changes nothing")
{
	on_one_rank(Topology({2, 2, 2}, 2), 1, [](DoubleGrid& grid) {
		const auto version = grid.mesh().structure_version();
		const auto hash = grid.mesh().content_hash();
		const auto change = grid.stop_refining();
		CHECK(change.created.empty());
		CHECK(change.removed.empty());
		CHECK(grid.mesh().structure_version() == version);
		CHECK(grid.mesh().content_hash() == hash);
	});
}

TEST_CASE("a corner cell of a uniform grid refines alone")
{
	on_one_rank(Topology({8, 8, 8}, 2), 1, [](DoubleGrid& grid) {
		grid.refine_completely(1);
		const auto change = grid.stop_refining();
		CHECK(change.refined == std::vector<CellId>{1});
		CHECK(change.created.size() == 8);
	});
}

TEST_CASE("refining next to a coarser cell induces its refinement")
{
	const Topology t({4, 4, 4}, 2);
	for (unsigned n : {0u, 1u}) {
		on_one_rank(t, n, [&](DoubleGrid& grid) {
			grid.refine_completely(22);
			grid.stop_refining();
			const auto before = grid.mesh().all_cells();
			// level-1 child of 22 on its +x face, next to level-0 cell 23
			const CellId child = t.id_from(1, Indices{{6, 4, 4}});
			REQUIRE(grid.exists(child));
			grid.refine_completely(child);
			const auto change = grid.stop_refining();
			CHECK(std::find(change.refined.begin(), change.refined.end(), CellId{23}) != change.refined.end());
			const std::set<CellId> committed(change.refined.begin(), change.refined.end());
			CHECK(committed == oracle::minimal_balanced_superset(t, n, before, {child}));
			CHECK(oracle::balanced(t, n, grid.mesh().all_cells()));
			CHECK_NOTHROW(grid.mesh().verify_balance());
		});
	}
}

TEST_CASE("unrefinement next to a finer cell is dropped")
{
	const Topology t({2, 1, 1}, 2);
	on_one_rank(t, 1, [&](DoubleGrid& grid) {
		grid.refine_completely(1);
		grid.refine_completely(2);
		grid.stop_refining();
		// the +x child of 1 touching cell 2's children
		const CellId toward = t.id_from(1, Indices{{2, 0, 0}});
		const CellId finer = t.id_from(1, Indices{{4, 0, 0}});
		grid.refine_completely(finer);
		grid.stop_refining();
		grid.unrefine(toward);
		const auto change = grid.stop_refining();
		CHECK(change.unrefined.empty());
		CHECK(grid.exists(toward));
		CHECK_NOTHROW(grid.mesh().verify_balance());
	});
}

TEST_CASE("unrefine policies")
{
	const Topology t({1, 1, 1}, 1);
	for (const auto policy : {UnrefinePolicy::any_sibling, UnrefinePolicy::all_siblings}) {
		on_one_rank(t, 1, [&](DoubleGrid& grid) {
			grid.set_unrefine_policy(policy);
			grid.refine_completely(1);
			grid.stop_refining();
			grid.unrefine(2);
			grid.stop_refining();
			CHECK(grid.exists(1) == (policy == UnrefinePolicy::any_sibling));
			if (policy == UnrefinePolicy::all_siblings) {
				for (CellId id = 2; id <= 9; ++id) {
					grid.unrefine(id);
				}
				grid.stop_refining();
				CHECK(grid.exists(1));
			}
		});
	}
}

TEST_CASE("default mapping conserves the volume integral exactly")
{
	const Topology t({3, 2, 2}, 2, {true, true, true});
	on_one_rank(t, 1, [&](DoubleGrid& grid) {
		std::mt19937_64 rng(3);
		// dyadic values keep every sum and average exact
		for (const CellId id : grid.local_cells()) {
			grid[id] = static_cast<double>(32 + rng() % 96) / 64;
		}
		const double start = total(grid);
		for (int round = 0; round < 6; ++round) {
			const std::vector<CellId> cells(grid.local_cells().begin(), grid.local_cells().end());
			for (const CellId id : cells) {
				const auto draw = rng() % 5;
				if (draw == 0 && grid.topology().level_of(id) < 2) {
					grid.refine_completely(id);
				} else if (draw == 1 && grid.topology().level_of(id) > 0) {
					grid.unrefine(id);
				}
			}
			grid.stop_refining();
			CHECK(total(grid) == start);
		}
	});
}

TEST_CASE("commits are identical across rank counts")
{
	oracle::MeshCase c;
	c.base = {3, 3, 2};
	c.max_level = 2;
	c.neighborhood = 1;
	c.seed = 11;
	c.rounds = 4;
	std::vector<std::vector<CellId>> finals;
	for (int ranks : {1, 2, 4}) {
		c.ranks = ranks;
		const auto result = oracle::run_case(c);
		for (const auto& history : result) {
			CHECK(history.back().cells == result.front().back().cells);
		}
		finals.push_back(result.front().back().cells);
	}
	CHECK(finals[0] == finals[1]);
	CHECK(finals[0] == finals[2]);
}

TEST_CASE("induced refinement is minimal on small random meshes")
{
	std::mt19937_64 rng(99);
	for (int k = 0; k < 12; ++k) {
		auto c = oracle::random_case(rng, 3, 2, 2);
		const auto verdict = oracle::verify_case(c, oracle::run_case(c), true);
		INFO("case " << k << ": " << verdict.failure);
		CHECK(verdict.minimal);
		CHECK(verdict.balance);
	}
}
