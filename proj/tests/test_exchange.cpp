#include "gridforge/grid.hpp"
#include "random_mesh.hpp"

#include <doctest.h>

#include <random>

using namespace gridforge;

namespace {

using DoubleGrid = Grid<double>;

const TransferTag count_tag{0};
const TransferTag payload_tag{1};

/// Variable-length cell: a particle count travels first, then the particles.
struct Particles {
	std::vector<double> x;
	std::uint64_t announced = 0;

	std::size_t transfer_size(TransferTag tag) const
	{
		if (tag == count_tag) {
			return sizeof(std::uint64_t);
		}
		if (tag == payload_tag) {
			return x.size() * sizeof(double);
		}
		return sizeof(std::uint64_t) + x.size() * sizeof(double);
	}

	void write_transfer(TransferTag tag, Bytes& out) const
	{
		ByteWriter w(out);
		if (tag != payload_tag) {
			w.put(static_cast<std::uint64_t>(x.size()));
		}
		if (tag != count_tag) {
			for (const double v : x) {
				w.put(v);
			}
		}
	}

	void read_transfer(TransferTag tag, std::span<const std::byte> in)
	{
		ByteReader r(in);
		if (tag == count_tag) {
			announced = r.get<std::uint64_t>();
			return;
		}
		std::size_t count = in.size() / sizeof(double);
		if (tag != payload_tag) {
			count = r.get<std::uint64_t>();
		}
		x.resize(count);
		for (auto& v : x) {
			v = r.get<double>();
		}
	}
};

double value_of(CellId id, int round) { return static_cast<double>(id) * 1.5 + round; }

/// Fills local cells, runs `update`, and checks every remote copy.
template <typename Update>
void check_round(DoubleGrid& grid, int round, Update update)
{
	for (const CellId id : grid.local_cells()) {
		grid[id] = value_of(id, round);
	}
	update();
	for (const CellId id : grid.mesh().remote_neighbors()) {
		REQUIRE(grid[id] == value_of(id, round));
	}
}

} // namespace

TEST_CASE("one rank needs no messages")
{
	run_ranks(1, [](Communicator& comm) {
		DoubleGrid grid(comm, Topology({3, 3, 3}, 1, {true, true, true}), ConstantGeometry<double>{}, 2);
		CHECK(grid.transfer_plan().empty());
		const auto before = comm.stats();
		grid.update_copies_of_remote_neighbors();
		CHECK(comm.stats().messages_sent == before.messages_sent);
	});
}

TEST_CASE("plan of a four-cell line split in two")
{
	run_ranks(2, [](Communicator& comm) {
		DoubleGrid grid(comm, Topology({4, 1, 1}, 0), ConstantGeometry<double>{}, 1, PartitionMethod::block());
		const auto& plan = grid.transfer_plan();
		const int other = 1 - comm.rank();
		const std::map<int, std::vector<CellId>> send{{other, {comm.rank() == 0 ? CellId{2} : CellId{3}}}};
		const std::map<int, std::vector<CellId>> receive{{other, {comm.rank() == 0 ? CellId{3} : CellId{2}}}};
		CHECK(plan.send == send);
		CHECK(plan.receive == receive);
		check_round(grid, 0, [&] { grid.update_copies_of_remote_neighbors(); });
	});
}

TEST_CASE("send and receive lists pair up on random meshes")
{
	std::mt19937_64 rng(5);
	for (int k = 0; k < 10; ++k) {
		const auto c = oracle::random_case(rng, 4, 2, 4);
		INFO("case " << k);
		const auto plans = run_ranks(c.ranks, [&](Communicator& comm) {
			DoubleGrid grid(comm, Topology(c.base, c.max_level, c.periodic), ConstantGeometry<double>{},
			                c.neighborhood, PartitionMethod::random(c.seed));
			std::mt19937_64 draws(c.seed);
			for (const CellId id : grid.mesh().all_cells()) {
				if (draws() % 4 == 0 && grid.is_local(id) && c.max_level > 0) {
					grid.refine_completely(id);
				}
			}
			grid.stop_refining();
			check_round(grid, 1, [&] { grid.update_copies_of_remote_neighbors(); });
			return grid.transfer_plan();
		});
		for (int a = 0; a < c.ranks; ++a) {
			for (const auto& [b, cells] : plans[static_cast<std::size_t>(a)].send) {
				CHECK(b != a);
				CHECK(std::is_sorted(cells.begin(), cells.end()));
				CHECK(plans[static_cast<std::size_t>(b)].receive.at(a) == cells);
			}
			for (const auto& [b, cells] : plans[static_cast<std::size_t>(a)].receive) {
				CHECK(plans[static_cast<std::size_t>(b)].send.count(a) == 1);
			}
		}
	}
}

TEST_CASE("batch wire image")
{
	const std::vector<std::pair<CellId, Bytes>> cells{{7, Bytes(3, std::byte{1})}, {9, {}}, {12, Bytes(1)}};
	const Bytes wire = encode_batch(cells);
	CHECK(wire.size() == 8 + 3 * 12 + 4);
	CHECK(decode_batch(wire) == cells);
	CHECK(decode_batch(encode_batch({})).empty());
	Bytes trailing = wire;
	trailing.push_back(std::byte{0});
	CHECK_THROWS_AS(decode_batch(trailing), TransportError);
	const Bytes truncated(wire.begin(), wire.end() - 1);
	CHECK_THROWS(decode_batch(truncated));
}

TEST_CASE("synchronous and split-phase updates deliver the same copies")
{
	const Topology t({6, 5, 4}, 1, {true, false, true});
	run_ranks(3, [&](Communicator& comm) {
		DoubleGrid grid(comm, t, ConstantGeometry<double>{}, 1, PartitionMethod::hilbert());
		check_round(grid, 0, [&] { grid.update_copies_of_remote_neighbors(); });
		check_round(grid, 1, [&] {
			grid.start_remote_neighbor_copy_updates();
			grid.wait_remote_neighbor_copy_update_receives();
			grid.wait_remote_neighbor_copy_update_sends();
		});
		check_round(grid, 2, [&] {
			grid.start_remote_neighbor_copy_updates();
			grid.wait_remote_neighbor_copy_update_sends();
			grid.wait_remote_neighbor_copy_update_receives();
		});
		// a repeated update with unchanged data is idempotent
		const auto before = grid.remote_copies();
		grid.update_copies_of_remote_neighbors();
		CHECK(grid.remote_copies() == before);
	});
}

TEST_CASE("per-cell and per-rank batching deliver identical bytes")
{
	const Topology t({4, 4, 4}, 1);
	for (const auto batching : {Batching::per_cell, Batching::per_rank}) {
		run_ranks(4, [&](Communicator& comm) {
			DoubleGrid grid(comm, t, ConstantGeometry<double>{}, 2, PartitionMethod::rcb());
			grid.set_message_batching(batching);
			const auto& plan = grid.transfer_plan();
			std::size_t expected = 0;
			for (const auto& [destination, cells] : plan.send) {
				expected += batching == Batching::per_rank ? 1 : cells.size();
			}
			const auto before = comm.stats();
			check_round(grid, 3, [&] { grid.update_copies_of_remote_neighbors(); });
			CHECK(comm.stats().messages_on(Channel::exchange) - before.messages_on(Channel::exchange) == expected);
			CHECK(comm.stats().collectives() == before.collectives());
		});
	}
}

TEST_CASE("misuse of the split-phase protocol")
{
	run_ranks(2, [](Communicator& comm) {
		DoubleGrid grid(comm, Topology({4, 1, 1}, 1), ConstantGeometry<double>{}, 1, PartitionMethod::block());
		grid.start_remote_neighbor_copy_updates();
		CHECK_THROWS_AS(grid.start_remote_neighbor_copy_updates(), std::logic_error);
		CHECK_THROWS_AS(grid.stop_refining(), std::logic_error);
		CHECK_THROWS_AS(grid.balance_load(PartitionMethod::block()), std::logic_error);
		CHECK_THROWS_AS(grid.set_message_batching(Batching::per_cell), std::logic_error);
		grid.wait_remote_neighbor_copy_update_receives();
		CHECK_THROWS_AS(grid.wait_remote_neighbor_copy_update_receives(), std::logic_error);
		grid.wait_remote_neighbor_copy_update_sends();
		CHECK_THROWS_AS(grid.wait_remote_neighbor_copy_update_sends(), std::logic_error);

		RemoteNeighborExchange engine;
		TransferPlan stale = grid.transfer_plan();
		stale.structure_version += 1;
		const auto& g = grid;
		CHECK_THROWS_AS(engine.start(
			                comm, stale, grid.mesh().structure_version(), {},
			                [&](CellId id, TransferTag, Bytes& out) { ByteWriter(out).put(g[id]); },
			                [](CellId, TransferTag) { return sizeof(double); }),
		                std::logic_error);
	});
}

TEST_CASE("changing a sent cell before wait_sends is caught")
{
	run_ranks(2, [](Communicator& comm) {
		DoubleGrid grid(comm, Topology({4, 1, 1}, 1), ConstantGeometry<double>{}, 1, PartitionMethod::block());
		grid.set_verify_unchanged_sends(true);
		grid.start_remote_neighbor_copy_updates();
		grid.wait_remote_neighbor_copy_update_receives();
		const CellId sent = grid.transfer_plan().send.begin()->second.front();
		grid[sent] += 1;
		CHECK_THROWS_AS(grid.wait_remote_neighbor_copy_update_sends(), std::logic_error);
	});
}

TEST_CASE("two-phase exchange of variable-length cells")
{
	const Topology t({4, 1, 1}, 0);
	const auto particles_of = [](CellId id, int round) {
		// 0, 3 and 7 particles, then growth from 3 to 5, then none at all
		static const std::size_t counts[3][4] = {{0, 3, 7, 3}, {5, 5, 0, 7}, {0, 0, 0, 0}};
		std::vector<double> x(counts[round][id - 1]);
		for (std::size_t k = 0; k < x.size(); ++k) {
			x[k] = static_cast<double>(id) + static_cast<double>(k) / 8;
		}
		return x;
	};
	run_ranks(2, [&](Communicator& comm) {
		Grid<Particles> grid(comm, t, ConstantGeometry<double>{}, 1, PartitionMethod::block());
		for (int round = 0; round < 3; ++round) {
			for (const CellId id : grid.local_cells()) {
				grid[id].x = particles_of(id, round);
			}
			grid.two_phase_variable_exchange(count_tag, payload_tag,
			                                 [](CellId, Particles& copy) { copy.x.resize(copy.announced); });
			for (const CellId id : grid.mesh().remote_neighbors()) {
				CHECK(grid[id].x == particles_of(id, round));
			}
		}

		// a resize that disagrees with the announced count
		for (const CellId id : grid.local_cells()) {
			grid[id].x = particles_of(id, 0);
		}
		CHECK_THROWS_AS(grid.two_phase_variable_exchange(
			                count_tag, payload_tag,
			                [](CellId, Particles& copy) { copy.x.resize(copy.announced + 1); }),
		                TransportError);
	});
}

TEST_CASE("whole cells move between ranks")
{
	run_ranks(3, [](Communicator& comm) {
		std::map<int, std::vector<std::pair<CellId, Bytes>>> outgoing;
		const int next = (comm.rank() + 1) % 3;
		outgoing[next].emplace_back(static_cast<CellId>(10 + comm.rank()), Bytes(4, std::byte{1}));
		outgoing[next].emplace_back(static_cast<CellId>(20 + comm.rank()), Bytes{});
		const int previous = (comm.rank() + 2) % 3;
		const std::vector<int> sources{previous};
		const auto received = move_cells(comm, Channel::migration, outgoing, sources);
		REQUIRE(received.size() == 2);
		CHECK(received[0].first == static_cast<CellId>(10 + previous));
		CHECK(received[0].second == Bytes(4, std::byte{1}));
		CHECK(received[1].second.empty());
	});
}
