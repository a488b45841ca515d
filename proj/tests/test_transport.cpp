#include "gridforge/transport.hpp"

#include <doctest.h>

#include <algorithm>
#include <mutex>
#include <numeric>
#include <random>
#include <tuple>

using namespace gridforge;

namespace {

Bytes random_bytes(std::mt19937_64& rng, std::size_t length)
{
	Bytes bytes(length);
	for (auto& b : bytes) {
		b = static_cast<std::byte>(rng());
	}
	return bytes;
}

const Tag user_tag = make_tag(Channel::user, 5);

} // namespace

TEST_CASE("tags keep subsystems apart")
{
	CHECK(channel_of(make_tag(Channel::migration, 7)) == Channel::migration);
	CHECK((make_tag(Channel::exchange, 0x12345678) & tag_value_mask) == 0x345678);
	CHECK(make_tag(Channel::exchange, 1) != make_tag(Channel::structure, 1));
}

TEST_CASE("envelope wire image round trips")
{
	std::mt19937_64 rng(1);
	const Envelope e{3, 1, make_tag(Channel::exchange, 9), random_bytes(rng, 37)};
	const Bytes wire = encode_envelope(e);
	CHECK(wire.size() == 4 + 4 + 4 + 8 + 37);
	CHECK(decode_envelope(wire) == e);
	Bytes truncated(wire.begin(), wire.end() - 1);
	CHECK_THROWS_AS(decode_envelope(truncated), TransportError);
}

TEST_CASE("byte reader refuses to run past the end")
{
	Bytes buffer;
	ByteWriter(buffer).put(std::uint32_t{0x01020304});
	CHECK(buffer.size() == 4);
	CHECK(static_cast<int>(buffer[0]) == 4);
	ByteReader reader(buffer);
	CHECK(reader.get<std::uint32_t>() == 0x01020304u);
	CHECK_THROWS_AS(reader.get<std::uint8_t>(), std::out_of_range);
}

TEST_CASE("self send of zero bytes")
{
	run_ranks(1, [](Communicator& comm) {
		comm.post_send(0, user_tag, {});
		Request r = comm.post_receive(0, user_tag, 0);
		comm.wait(r);
		CHECK(r.completed());
		CHECK(r.payload().empty());
	});
}

TEST_CASE("two ranks exchange 128-byte payloads bit exactly")
{
	run_ranks(2, [](Communicator& comm) {
		std::mt19937_64 rng(static_cast<std::uint64_t>(comm.rank()));
		const Bytes mine = random_bytes(rng, 128);
		std::mt19937_64 peer_rng(static_cast<std::uint64_t>(1 - comm.rank()));
		const Bytes theirs = random_bytes(peer_rng, 128);
		std::vector<Request> requests;
		requests.push_back(comm.post_receive(1 - comm.rank(), user_tag, 128));
		requests.push_back(comm.post_send(1 - comm.rank(), user_tag, mine));
		comm.wait_all(requests);
		CHECK(requests[0].payload() == theirs);
	});
}

TEST_CASE("same source and tag deliver in send order")
{
	run_ranks(2, [](Communicator& comm) {
		if (comm.rank() == 0) {
			comm.post_send(1, user_tag, Bytes{std::byte{'A'}});
			comm.post_send(1, user_tag, Bytes{std::byte{'B'}});
		} else {
			// matched in posting order, whatever the completion order
			Request posted_first = comm.post_receive(0, user_tag, 1);
			Request posted_second = comm.post_receive(0, user_tag, 1);
			comm.wait(posted_second);
			comm.wait(posted_first);
			CHECK(posted_first.payload() == Bytes{std::byte{'A'}});
			CHECK(posted_second.payload() == Bytes{std::byte{'B'}});
		}
	});
}

TEST_CASE("oversized payloads fail at the receiver")
{
	CHECK_THROWS_AS(run_ranks(2,
	                          [](Communicator& comm) {
		                          if (comm.rank() == 0) {
			                          comm.post_send(1, user_tag, Bytes(10));
		                          } else {
			                          Request r = comm.post_receive(0, user_tag, 9);
			                          comm.wait(r);
		                          }
	                          }),
	                TransportError);
}

TEST_CASE("random payloads up to 64 KiB arrive unchanged")
{
	run_ranks(3, [](Communicator& comm) {
		const int next = (comm.rank() + 1) % comm.size();
		const int previous = (comm.rank() + comm.size() - 1) % comm.size();
		for (int round = 0; round < 12; ++round) {
			std::mt19937_64 rng(static_cast<std::uint64_t>(round * 10 + comm.rank()));
			const std::size_t length = round == 0 ? 0 : (round == 1 ? 65536 : rng() % 65537);
			comm.post_send(next, user_tag, random_bytes(rng, length));

			std::mt19937_64 expect_rng(static_cast<std::uint64_t>(round * 10 + previous));
			const std::size_t expect_length = round == 0 ? 0 : (round == 1 ? 65536 : expect_rng() % 65537);
			const Bytes expected = random_bytes(expect_rng, expect_length);
			Request r = comm.post_receive(previous, user_tag, 65536);
			comm.wait(r);
			REQUIRE(r.payload() == expected);
		}
	});
}

TEST_CASE("collectives agree on every rank")
{
	const auto results = run_ranks(3, [](Communicator& comm) {
		const double values[] = {0.5, 0.2, 0.9};
		const double mine = values[comm.rank()];
		const Bytes block(static_cast<std::size_t>(std::array{0, 5, 3}[static_cast<std::size_t>(comm.rank())]),
		                  static_cast<std::byte>(comm.rank()));
		return std::tuple{comm.allreduce(mine, ReduceOp::min), comm.allreduce(mine, ReduceOp::max),
		                  comm.allreduce(std::uint64_t{10} * (comm.rank() + 1), ReduceOp::sum),
		                  comm.allgather_variable(block)};
	});
	for (const auto& [lo, hi, sum, blocks] : results) {
		CHECK(lo == 0.2);
		CHECK(hi == 0.9);
		CHECK(sum == 60);
		REQUIRE(blocks.size() == 3);
		CHECK(blocks[0].empty());
		CHECK(blocks[1].size() == 5);
		CHECK(blocks[2] == Bytes(3, std::byte{2}));
		CHECK(blocks == std::get<3>(results.front()));
	}

	// random inputs: identical answers everywhere, min and max independent of order
	std::mt19937_64 rng(5);
	std::vector<double> inputs(5);
	for (auto& v : inputs) {
		v = std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
	}
	for (int trial = 0; trial < 2; ++trial) {
		if (trial == 1) {
			std::reverse(inputs.begin(), inputs.end());
		}
		const auto reduced = run_ranks(5, [&](Communicator& comm) {
			const double v = inputs[static_cast<std::size_t>(comm.rank())];
			return std::array{comm.allreduce(v, ReduceOp::min), comm.allreduce(v, ReduceOp::max),
			                  comm.allreduce(v, ReduceOp::sum)};
		});
		for (const auto& r : reduced) {
			CHECK(r == reduced.front());
			CHECK(r[0] == *std::min_element(inputs.begin(), inputs.end()));
			CHECK(r[1] == *std::max_element(inputs.begin(), inputs.end()));
		}
	}
}

TEST_CASE("run_ranks results and failures")
{
	CHECK(run_ranks(1, [](Communicator& comm) { return comm.rank(); }) == std::vector<int>{0});
	const auto sums = run_ranks(4, [](Communicator& comm) { return comm.allreduce(comm.rank(), ReduceOp::sum); });
	CHECK(sums == std::vector<int>{6, 6, 6, 6});
	CHECK_THROWS_AS(run_ranks(0, [](Communicator&) {}), std::invalid_argument);

	CHECK_THROWS_WITH_AS(run_ranks(3,
	                               [](Communicator& comm) {
		                               if (comm.rank() == 2) {
			                               throw std::runtime_error("rank two failed");
		                               }
		                               comm.barrier();
	                               }),
	                     "rank two failed", std::runtime_error);
}

TEST_CASE("a fully blocked system is reported as a deadlock")
{
	for (const bool deterministic : {false, true}) {
		RunOptions options;
		options.deterministic = deterministic;
		options.schedule_seed = 3;
		CHECK_THROWS_AS(run_ranks(
			                2,
			                [](Communicator& comm) {
				                comm.post_send(1 - comm.rank(), make_tag(Channel::user, 1), Bytes(4));
				                Request r = comm.post_receive(1 - comm.rank(), make_tag(Channel::user, 2), 4);
				                comm.wait(r);
			                },
			                options),
		                DeadlockError);
	}
}

TEST_CASE("a seeded schedule replays exactly")
{
	const auto trace = [](std::uint64_t seed) {
		RunOptions options{true, seed};
		std::vector<int> order;
		std::mutex guard;
		run_ranks(
			4,
			[&](Communicator& comm) {
				for (int k = 0; k < 3; ++k) {
					{
						std::lock_guard lock(guard);
						order.push_back(comm.rank());
					}
					comm.post_send((comm.rank() + 1) % 4, user_tag, Bytes(1));
					Request r = comm.post_receive((comm.rank() + 3) % 4, user_tag, 1);
					comm.wait(r);
				}
			},
			options);
		return order;
	};
	CHECK(trace(42) == trace(42));
	CHECK(trace(7) == trace(7));
}

TEST_CASE("traffic counters")
{
	run_ranks(2, [](Communicator& comm) {
		const auto before = comm.stats();
		comm.post_send(1 - comm.rank(), make_tag(Channel::exchange, 0), Bytes(16));
		Request r = comm.post_receive(1 - comm.rank(), make_tag(Channel::exchange, 0), 16);
		comm.wait(r);
		comm.barrier();
		const auto after = comm.stats();
		CHECK(after.messages_sent - before.messages_sent == 1);
		CHECK(after.bytes_sent - before.bytes_sent == 16);
		CHECK(after.messages_on(Channel::exchange) - before.messages_on(Channel::exchange) == 1);
		CHECK(after.barriers - before.barriers == 1);
		CHECK(after.collectives() - before.collectives() == 1);
	});
}
