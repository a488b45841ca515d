#include "gridforge/exchange.hpp"

#include <algorithm>
#include <iterator>
#include <string>

namespace gridforge {

namespace {

std::uint64_t fnv1a(std::span<const std::byte> bytes)
{
	std::uint64_t hash = 0xCBF29CE484222325ull;
	for (const auto b : bytes) {
		hash = (hash ^ static_cast<std::uint64_t>(b)) * 0x100000001B3ull;
	}
	return hash;
}

constexpr std::size_t batch_header = 8;
constexpr std::size_t batch_entry_header = 8 + 4;

} // namespace

TransferPlan build_transfer_plan(const Mesh& mesh)
{
	TransferPlan plan;
	plan.structure_version = mesh.structure_version();
	const int self = mesh.rank();

	if (mesh.rank_count() == 1) {
		return plan;
	}
	std::vector<int> destinations;
	// inner cells have no remote arrows
	for (const CellId id : mesh.classify_cells().outer) {
		destinations.clear();
		for (const auto lists : {mesh.neighbors_of(id), mesh.neighbors_to(id)}) {
			for (const CellId other : lists) {
				const int owner = mesh.owner_of(other);
				if (owner != self) {
					destinations.push_back(owner);
				}
			}
		}
		std::sort(destinations.begin(), destinations.end());
		destinations.erase(std::unique(destinations.begin(), destinations.end()), destinations.end());
		for (const int destination : destinations) {
			plan.send[destination].push_back(id);
		}
	}
	for (const CellId id : mesh.remote_neighbors()) {
		plan.receive[mesh.owner_of(id)].push_back(id);
	}
	return plan;
}

Bytes encode_batch(std::span<const std::pair<CellId, Bytes>> cells)
{
	Bytes wire;
	ByteWriter out(wire);
	out.put(static_cast<std::uint64_t>(cells.size()));
	for (const auto& [id, payload] : cells) {
		out.put(static_cast<std::uint64_t>(id));
		out.put(static_cast<std::uint32_t>(payload.size()));
		out.put_bytes(payload);
	}
	return wire;
}

std::vector<std::pair<CellId, Bytes>> decode_batch(std::span<const std::byte> wire)
{
	ByteReader in(wire);
	const auto count = in.get<std::uint64_t>();
	std::vector<std::pair<CellId, Bytes>> cells;
	for (std::uint64_t k = 0; k < count; ++k) {
		const CellId id = in.get<std::uint64_t>();
		const auto length = in.get<std::uint32_t>();
		const auto payload = in.get_bytes(length);
		cells.emplace_back(id, Bytes(payload.begin(), payload.end()));
	}
	if (!in.done()) {
		throw TransportError("batch: trailing bytes after the last cell");
	}
	return cells;
}

std::vector<std::pair<CellId, Bytes>> move_cells(Communicator& comm, Channel channel,
                                                 const std::map<int, std::vector<std::pair<CellId, Bytes>>>& outgoing,
                                                 std::span<const int> sources)
{
	const Tag size_tag = make_tag(channel, 0);
	const Tag data_tag = make_tag(channel, 1);

	std::vector<Request> size_receives;
	for (const int source : sources) {
		size_receives.push_back(comm.post_receive(source, size_tag, sizeof(std::uint64_t)));
	}
	std::vector<Bytes> wires;
	std::vector<Request> sends;
	for (const auto& [destination, cells] : outgoing) {
		wires.push_back(encode_batch(cells));
		Bytes length;
		ByteWriter(length).put(static_cast<std::uint64_t>(wires.back().size()));
		sends.push_back(comm.post_send(destination, size_tag, std::move(length)));
	}

	comm.wait_all(size_receives);
	std::vector<Request> data_receives;
	for (std::size_t k = 0; k < sources.size(); ++k) {
		const auto length = ByteReader(size_receives[k].payload()).get<std::uint64_t>();
		data_receives.push_back(comm.post_receive(sources[k], data_tag, static_cast<std::size_t>(length)));
	}
	std::size_t w = 0;
	for (const auto& entry : outgoing) {
		sends.push_back(comm.post_send(entry.first, data_tag, std::move(wires[w++])));
	}
	comm.wait_all(data_receives);
	comm.wait_all(sends);

	std::vector<std::pair<CellId, Bytes>> received;
	for (auto& request : data_receives) {
		auto cells = decode_batch(request.payload());
		std::move(cells.begin(), cells.end(), std::back_inserter(received));
	}
	std::sort(received.begin(), received.end(),
	          [](const auto& a, const auto& b) { return a.first < b.first; });
	return received;
}

void RemoteNeighborExchange::set_batching(Batching batching)
{
	if (in_flight()) {
		throw std::logic_error("exchange: cannot change batching while an update is in flight");
	}
	batching_ = batching;
}

void RemoteNeighborExchange::require_version(std::uint64_t structure_version) const
{
	if (structure_version != version_) {
		throw std::logic_error("exchange: grid structure changed while an update was in flight");
	}
}

void RemoteNeighborExchange::start(Communicator& comm, const TransferPlan& plan, std::uint64_t structure_version,
                                   TransferTag tag, const Serializer& serialize, const Sizer& expected_size)
{
	if (in_flight()) {
		throw std::logic_error("exchange: previous update has not been waited for");
	}
	if (plan.structure_version != structure_version) {
		throw std::logic_error("exchange: transfer plan is stale");
	}
	if (tag.value > tag_value_mask) {
		throw std::invalid_argument("exchange: transfer tag too large");
	}
	const Tag wire_tag = make_tag(Channel::exchange, tag.value);
	tag_ = tag;
	version_ = structure_version;
	receives_.clear();
	sends_.clear();
	send_digests_.clear();

	// receives first so their tickets are in place before any data moves
	for (const auto& [source, cells] : plan.receive) {
		PendingReceive pending;
		pending.source = source;
		pending.cells = cells;
		pending.limits.reserve(cells.size());
		std::size_t batch_limit = batch_header;
		for (const CellId id : cells) {
			const std::size_t limit = expected_size(id, tag);
			pending.limits.push_back(limit);
			batch_limit += batch_entry_header + limit;
		}
		if (batching_ == Batching::per_rank) {
			pending.requests.push_back(comm.post_receive(source, wire_tag, batch_limit));
		} else {
			for (const std::size_t limit : pending.limits) {
				pending.requests.push_back(comm.post_receive(source, wire_tag, limit));
			}
		}
		receives_.push_back(std::move(pending));
	}

	for (const auto& [destination, cells] : plan.send) {
		if (batching_ == Batching::per_rank) {
			std::vector<std::pair<CellId, Bytes>> batch;
			batch.reserve(cells.size());
			for (const CellId id : cells) {
				Bytes payload;
				serialize(id, tag, payload);
				if (verify_sends_) {
					send_digests_.emplace_back(id, fnv1a(payload));
				}
				batch.emplace_back(id, std::move(payload));
			}
			sends_.push_back(comm.post_send(destination, wire_tag, encode_batch(batch)));
		} else {
			for (const CellId id : cells) {
				Bytes payload;
				serialize(id, tag, payload);
				if (verify_sends_) {
					send_digests_.emplace_back(id, fnv1a(payload));
				}
				sends_.push_back(comm.post_send(destination, wire_tag, std::move(payload)));
			}
		}
	}

	receives_pending_ = true;
	sends_pending_ = true;
}

void RemoteNeighborExchange::wait_receives(Communicator& comm, std::uint64_t structure_version, const Sink& store)
{
	if (!receives_pending_) {
		throw std::logic_error("exchange: no receives to wait for");
	}
	require_version(structure_version);
	receives_pending_ = false;

	for (auto& pending : receives_) {
		comm.wait_all(pending.requests);
		if (batching_ == Batching::per_rank) {
			const auto cells = decode_batch(pending.requests.front().payload());
			if (cells.size() != pending.cells.size()) {
				throw TransportError("exchange: rank " + std::to_string(pending.source) + " sent "
				                     + std::to_string(cells.size()) + " cells, expected "
				                     + std::to_string(pending.cells.size()));
			}
			for (std::size_t k = 0; k < cells.size(); ++k) {
				if (cells[k].first != pending.cells[k]) {
					throw TransportError("exchange: unexpected cell " + std::to_string(cells[k].first) + " from rank "
					                     + std::to_string(pending.source));
				}
				if (cells[k].second.size() > pending.limits[k]) {
					throw TransportError("exchange: cell " + std::to_string(cells[k].first) + " carries "
					                     + std::to_string(cells[k].second.size()) + " bytes, at most "
					                     + std::to_string(pending.limits[k]) + " expected");
				}
				store(cells[k].first, tag_, cells[k].second);
			}
		} else {
			for (std::size_t k = 0; k < pending.cells.size(); ++k) {
				store(pending.cells[k], tag_, pending.requests[k].payload());
			}
		}
	}
	receives_.clear();
}

void RemoteNeighborExchange::wait_sends(Communicator& comm, std::uint64_t structure_version,
                                        const Serializer& serialize)
{
	if (!sends_pending_) {
		throw std::logic_error("exchange: no sends to wait for");
	}
	require_version(structure_version);
	sends_pending_ = false;
	comm.wait_all(sends_);
	sends_.clear();

	for (const auto& [id, digest] : send_digests_) {
		Bytes now;
		serialize(id, tag_, now);
		if (fnv1a(now) != digest) {
			throw std::logic_error("exchange: data of cell " + std::to_string(id)
			                       + " changed before its send completed");
		}
	}
	send_digests_.clear();
}

void RemoteNeighborExchange::update(Communicator& comm, const TransferPlan& plan, std::uint64_t structure_version,
                                    TransferTag tag, const Serializer& serialize, const Sizer& expected_size,
                                    const Sink& store)
{
	start(comm, plan, structure_version, tag, serialize, expected_size);
	wait_receives(comm, structure_version, store);
	wait_sends(comm, structure_version, serialize);
}

} // namespace gridforge
