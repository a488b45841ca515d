#include "gridforge/grid.hpp"
#include "gridforge/partition.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

using namespace gridforge;

namespace {

std::vector<CellId> level0(const Topology& t)
{
	std::vector<CellId> cells(t.cells_on_level(0));
	std::iota(cells.begin(), cells.end(), t.level_start(0));
	return cells;
}

std::vector<std::size_t> counts(const std::vector<int>& owners, int ranks)
{
	std::vector<std::size_t> result(static_cast<std::size_t>(ranks), 0);
	for (const int r : owners) {
		++result.at(static_cast<std::size_t>(r));
	}
	return result;
}

/// Faces between cells of different parts over faces of all parts' cells.
double surface_to_volume(const Topology& t, const std::vector<CellId>& cells, const std::vector<int>& owners)
{
	std::unordered_map<CellId, int> owner;
	for (std::size_t k = 0; k < cells.size(); ++k) {
		owner[cells[k]] = owners[k];
	}
	std::size_t cut = 0;
	for (const CellId c : cells) {
		const Indices where = t.indices_of(c);
		for (std::size_t d = 0; d < 3; ++d) {
			Indices next = where;
			next[d] += 1;
			const CellId other = t.try_id_from(0, next);
			if (other != error_cell && owner.at(other) != owner.at(c)) {
				++cut;
			}
		}
	}
	return static_cast<double>(cut) / static_cast<double>(cells.size());
}

} // namespace

TEST_CASE("partition names")
{
	CHECK(parse_partition_kind("hsfc") == PartitionKind::hilbert_sfc);
	CHECK(parse_partition_kind("Hilbert") == PartitionKind::hilbert_sfc);
	CHECK(parse_partition_kind("RCB") == PartitionKind::rcb);
	CHECK(parse_partition_kind("block") == PartitionKind::block);
	CHECK(parse_partition_kind("random") == PartitionKind::random);
	CHECK(parse_partition_kind("none") == PartitionKind::none);
	CHECK_THROWS_AS(parse_partition_kind("graph"), std::invalid_argument);
	CHECK(to_string(PartitionKind::hilbert_sfc) == "HILBERT_SFC");
}

TEST_CASE("the Hilbert curve is a self-similar unit-step bijection")
{
	for (unsigned bits = 1; bits <= 4; ++bits) {
		CHECK(oracle::hilbert_curve_properties(bits, [&](std::uint64_t i) { return hilbert_point(i, bits); }));
		const std::uint64_t side = std::uint64_t{1} << bits;
		for (std::uint64_t z = 0; z < side; ++z) {
			for (std::uint64_t y = 0; y < side; ++y) {
				for (std::uint64_t x = 0; x < side; ++x) {
					const std::array<std::uint64_t, 3> p{x, y, z};
					REQUIRE(hilbert_point(hilbert_index(p, bits), bits) == p);
				}
			}
		}
	}
	CHECK_THROWS_AS(hilbert_index({0, 0, 0}, 22), std::invalid_argument);
}

TEST_CASE("Hilbert rank order")
{
	const Topology one({1, 1, 1}, 0);
	CHECK(hilbert_rank_order(one, std::vector<CellId>{1}) == std::vector<CellId>{1});

	const Topology cube({2, 2, 2}, 0);
	const auto order = hilbert_rank_order(cube, level0(cube));
	REQUIRE(order.size() == 8);
	CHECK(std::set<CellId>(order.begin(), order.end()).size() == 8);
	for (std::size_t k = 1; k < order.size(); ++k) {
		CHECK(faces_touch(cube, order[k - 1], order[k]));
	}

	// 4^3: the order is the reference curve restricted to the cells' doubled centers
	const Topology four({4, 4, 4}, 0);
	const auto cells = level0(four);
	const auto ordered = hilbert_rank_order(four, cells);
	std::vector<std::pair<std::uint64_t, CellId>> expected;
	for (const CellId c : cells) {
		const Indices ix = four.indices_of(c);
		expected.emplace_back(hilbert_index({2 * ix[0] + 1, 2 * ix[1] + 1, 2 * ix[2] + 1}, 3), c);
	}
	std::sort(expected.begin(), expected.end());
	for (std::size_t k = 0; k < cells.size(); ++k) {
		CHECK(ordered[k] == expected[k].second);
		if (k > 0) {
			CHECK(faces_touch(four, ordered[k - 1], ordered[k]));
		}
	}
}

TEST_CASE("block, rcb, random and none")
{
	const Topology hundred({100, 1, 1}, 0);
	const auto cells = level0(hundred);
	CHECK(counts(partition(PartitionMethod::block(), hundred, cells, {}, 4), 4)
	      == std::vector<std::size_t>{25, 25, 25, 25});
	const auto block = partition(PartitionMethod::block(), hundred, cells, {}, 4);
	CHECK(std::is_sorted(block.begin(), block.end()));

	const Topology line({4, 1, 1}, 0);
	CHECK(partition(PartitionMethod::rcb(), line, level0(line), {}, 2) == std::vector<int>{0, 0, 1, 1});

	const Topology thousand({10, 10, 10}, 0);
	const auto many = level0(thousand);
	const auto first = partition(PartitionMethod::random(17), thousand, many, {}, 10);
	CHECK(first == partition(PartitionMethod::random(17), thousand, many, {}, 10));
	CHECK(first != partition(PartitionMethod::random(18), thousand, many, {}, 10));
	for (const auto c : counts(first, 10)) {
		CHECK(c > 50);
	}

	const std::vector<int> current(many.size(), 3);
	CHECK(partition(PartitionMethod::none(), thousand, many, {}, 10, current) == current);
	CHECK(partition(PartitionMethod::block(), thousand, std::vector<CellId>{}, {}, 3).empty());
}

TEST_CASE("weights shift the block and curve boundaries")
{
	const Topology line({8, 1, 1}, 0);
	const auto cells = level0(line);
	std::vector<double> weights(8, 1);
	weights[0] = 7;
	for (const auto method : {PartitionMethod::block(), PartitionMethod::hilbert(), PartitionMethod::rcb()}) {
		const auto owners = partition(method, line, cells, weights, 2);
		CHECK(std::count(owners.begin(), owners.end(), owners[0]) == 1);
	}
}

TEST_CASE("every partition is total")
{
	const Topology t({5, 3, 2}, 1);
	const auto cells = level0(t);
	for (const auto method : {PartitionMethod::block(), PartitionMethod::rcb(), PartitionMethod::hilbert(),
	                          PartitionMethod::random(1)}) {
		for (int ranks : {1, 2, 7, 40}) {
			const auto owners = partition(method, t, cells, {}, ranks);
			REQUIRE(owners.size() == cells.size());
			for (const int r : owners) {
				CHECK((r >= 0 && r < ranks));
			}
		}
	}
}

TEST_CASE("Hilbert parts have less surface than random ones")
{
	const Topology t({8, 8, 8}, 0);
	const auto cells = level0(t);
	const double curve = surface_to_volume(t, cells, partition(PartitionMethod::hilbert(), t, cells, {}, 8));
	double random = 0;
	for (std::uint64_t seed = 0; seed < 10; ++seed) {
		random += surface_to_volume(t, cells, partition(PartitionMethod::random(seed), t, cells, {}, 8)) / 10;
	}
	CHECK(curve < random);
}

TEST_CASE("local cell fraction")
{
	CHECK(local_cell_fraction(std::vector<std::size_t>{6, 3}) == 2.0);
	CHECK(local_cell_fraction(std::vector<std::size_t>{4, 4, 4}) == 1.0);
	CHECK(local_cell_fraction(std::vector<std::size_t>{5, 0}) == std::numeric_limits<double>::infinity());
}

namespace {

struct Tagged {
	std::uint64_t origin = 0;
	double payload = 0;
};

using TaggedGrid = Grid<Tagged>;

} // namespace

TEST_CASE("balance_load moves data and matches a fresh partition")
{
	const Topology t({5, 4, 3}, 1);
	run_ranks(2, [&](Communicator& comm) {
		TaggedGrid grid(comm, t, ConstantGeometry<double>{}, 1, PartitionMethod::none());
		for (const CellId id : grid.local_cells()) {
			grid[id] = {id, static_cast<double>(id) * 0.5};
		}
		CHECK(grid.balance_load(PartitionMethod::none()).moved == 0);

		const auto report = grid.balance_load(PartitionMethod::block());
		CHECK(report.moved == 30);
		CHECK(report.sent == (comm.rank() == 0 ? 30u : 0u));
		CHECK(report.received == (comm.rank() == 1 ? 30u : 0u));

		TaggedGrid fresh(comm, t, ConstantGeometry<double>{}, 1, PartitionMethod::block());
		CHECK(grid.mesh().content_hash() == fresh.mesh().content_hash());
		for (const CellId id : grid.local_cells()) {
			CHECK(grid[id].origin == id);
			CHECK(grid[id].payload == static_cast<double>(id) * 0.5);
		}
		// remote copies were refreshed for the new layout
		grid.update_copies_of_remote_neighbors();
		for (const auto& [id, copy] : grid.remote_copies()) {
			CHECK(copy.origin == id);
		}
	});
	run_ranks(1, [&](Communicator& comm) {
		TaggedGrid grid(comm, t, ConstantGeometry<double>{}, 1);
		CHECK(grid.balance_load(PartitionMethod::random(4)).moved == 0);
	});
}

TEST_CASE("pins override the partitioner until unpinned")
{
	const Topology t({6, 6, 1}, 1);
	run_ranks(3, [&](Communicator& comm) {
		TaggedGrid grid(comm, t, ConstantGeometry<double>{}, 1, PartitionMethod::block());
		for (const CellId id : grid.local_cells()) {
			grid[id] = {id, 1};
		}
		if (grid.is_local(1)) {
			grid.pin(1, 2);
			CHECK_THROWS_AS(grid.pin(1, 3), std::invalid_argument);
		}
		if (grid.is_local(36)) {
			CHECK_THROWS_AS(grid.pin(1, 0), NotLocal);
		}
		grid.balance_load(PartitionMethod::hilbert());
		CHECK(grid.owner_of(1) == 2);
		grid.balance_load(PartitionMethod::rcb());
		CHECK(grid.owner_of(1) == 2);
		if (grid.is_local(1)) {
			CHECK(grid[1].origin == 1);
			grid.unpin(1);
		}
		grid.balance_load(PartitionMethod::block());
		CHECK(grid.owner_of(1) == 0);

		// migration keeps the multiset of (cell, data)
		std::uint64_t local_sum = 0;
		for (const CellId id : grid.local_cells()) {
			local_sum += grid[id].origin;
		}
		CHECK(comm.allreduce(local_sum, ReduceOp::sum) == 36 * 37 / 2);
	});
}

TEST_CASE("weighted balance_load")
{
	const Topology t({8, 1, 1}, 0);
	run_ranks(2, [&](Communicator& comm) {
		TaggedGrid grid(comm, t, ConstantGeometry<double>{}, 1, PartitionMethod::block());
		grid.set_weight([](CellId id, const Tagged&) { return id == 1 ? 7.0 : 1.0; });
		grid.balance_load(PartitionMethod::block());
		CHECK(grid.mesh().local_cell_counts() == std::vector<std::size_t>{1, 7});
		CHECK(grid.local_cell_fraction() == 7.0);
	});
}
