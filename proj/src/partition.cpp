#include "gridforge/partition.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace gridforge {

PartitionKind parse_partition_kind(std::string_view name)
{
	std::string upper(name);
	std::transform(upper.begin(), upper.end(), upper.begin(),
	               [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
	if (upper == "NONE") return PartitionKind::none;
	if (upper == "RANDOM") return PartitionKind::random;
	if (upper == "BLOCK") return PartitionKind::block;
	if (upper == "RCB") return PartitionKind::rcb;
	if (upper == "HSFC" || upper == "HILBERT" || upper == "HILBERT_SFC") return PartitionKind::hilbert_sfc;
	throw std::invalid_argument("unknown partition method '" + std::string(name) + "'");
}

std::string_view to_string(PartitionKind kind)
{
	switch (kind) {
	case PartitionKind::none: return "NONE";
	case PartitionKind::random: return "RANDOM";
	case PartitionKind::block: return "BLOCK";
	case PartitionKind::rcb: return "RCB";
	case PartitionKind::hilbert_sfc: return "HILBERT_SFC";
	}
	return "?";
}

std::uint64_t hilbert_index(std::array<std::uint64_t, 3> x, unsigned bits)
{
	if (bits == 0) {
		return 0;
	}
	if (bits > 21) {
		throw std::invalid_argument("hilbert_index: at most 21 bits per dimension");
	}
	const std::uint64_t top = std::uint64_t{1} << (bits - 1);

	// inverse undo
	for (std::uint64_t q = top; q > 1; q >>= 1) {
		const std::uint64_t p = q - 1;
		for (std::size_t i = 0; i < 3; ++i) {
			if (x[i] & q) {
				x[0] ^= p;
			} else {
				const std::uint64_t t = (x[0] ^ x[i]) & p;
				x[0] ^= t;
				x[i] ^= t;
			}
		}
	}
	// gray encode
	for (std::size_t i = 1; i < 3; ++i) {
		x[i] ^= x[i - 1];
	}
	std::uint64_t t = 0;
	for (std::uint64_t q = top; q > 1; q >>= 1) {
		if (x[2] & q) {
			t ^= q - 1;
		}
	}
	for (auto& component : x) {
		component ^= t;
	}

	// transposed form -> index, most significant bits first
	std::uint64_t index = 0;
	for (int bit = static_cast<int>(bits) - 1; bit >= 0; --bit) {
		for (std::size_t i = 0; i < 3; ++i) {
			index = (index << 1) | ((x[i] >> bit) & 1u);
		}
	}
	return index;
}

std::array<std::uint64_t, 3> hilbert_point(std::uint64_t index, unsigned bits)
{
	std::array<std::uint64_t, 3> x{};
	if (bits == 0) {
		return x;
	}
	if (bits > 21) {
		throw std::invalid_argument("hilbert_point: at most 21 bits per dimension");
	}
	for (int bit = static_cast<int>(bits) - 1; bit >= 0; --bit) {
		for (std::size_t i = 0; i < 3; ++i) {
			const unsigned shift = static_cast<unsigned>(bit) * 3 + (2 - static_cast<unsigned>(i));
			x[i] |= ((index >> shift) & 1u) << bit;
		}
	}

	const std::uint64_t end = std::uint64_t{2} << (bits - 1);
	// gray decode
	const std::uint64_t t = x[2] >> 1;
	for (std::size_t i = 2; i > 0; --i) {
		x[i] ^= x[i - 1];
	}
	x[0] ^= t;
	// undo excess work
	for (std::uint64_t q = 2; q != end; q <<= 1) {
		const std::uint64_t p = q - 1;
		for (int i = 2; i >= 0; --i) {
			if (x[static_cast<std::size_t>(i)] & q) {
				x[0] ^= p;
			} else {
				const std::uint64_t s = (x[0] ^ x[static_cast<std::size_t>(i)]) & p;
				x[0] ^= s;
				x[static_cast<std::size_t>(i)] ^= s;
			}
		}
	}
	return x;
}

namespace {

/// Cell center on the doubled index lattice: 2 * corner + size.
std::array<std::uint64_t, 3> doubled_center(const Topology& topology, CellId id)
{
	const Indices corner = topology.indices_of(id);
	const std::uint64_t size = topology.cell_size_in_indices(topology.level_of(id));
	return {2 * corner[0] + size, 2 * corner[1] + size, 2 * corner[2] + size};
}

/// Cuts an ordered sequence into rank_count consecutive chunks of near-equal weight.
void chunk_by_weight(std::span<const std::size_t> order, std::span<const double> weights, int first_rank,
                     int rank_count, std::vector<int>& owners)
{
	double total = 0;
	for (const auto k : order) {
		total += weights.empty() ? 1.0 : weights[k];
	}
	double before = 0;
	for (const auto k : order) {
		const double w = weights.empty() ? 1.0 : weights[k];
		int chunk = 0;
		if (total > 0) {
			chunk = static_cast<int>((before + w / 2) * rank_count / total);
		}
		owners[k] = first_rank + std::clamp(chunk, 0, rank_count - 1);
		before += w;
	}
}

void bisect(const std::vector<std::array<std::uint64_t, 3>>& centers, std::span<const CellId> cells,
            std::span<const double> weights, std::vector<std::size_t> items, int first_rank, int rank_count,
            std::vector<int>& owners)
{
	if (items.empty()) {
		return;
	}
	if (rank_count == 1) {
		for (const auto k : items) {
			owners[k] = first_rank;
		}
		return;
	}

	std::array<std::uint64_t, 3> lo{};
	std::array<std::uint64_t, 3> hi{};
	lo.fill(std::numeric_limits<std::uint64_t>::max());
	for (const auto k : items) {
		for (std::size_t d = 0; d < 3; ++d) {
			lo[d] = std::min(lo[d], centers[k][d]);
			hi[d] = std::max(hi[d], centers[k][d]);
		}
	}
	std::size_t axis = 0;
	for (std::size_t d = 1; d < 3; ++d) {
		if (hi[d] - lo[d] > hi[axis] - lo[axis]) {
			axis = d;
		}
	}
	std::sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) {
		if (centers[a][axis] != centers[b][axis]) {
			return centers[a][axis] < centers[b][axis];
		}
		return cells[a] < cells[b];
	});

	const int left_ranks = rank_count / 2;
	double total = 0;
	for (const auto k : items) {
		total += weights.empty() ? 1.0 : weights[k];
	}
	const double target = total * left_ranks / rank_count;
	std::size_t split = 0;
	double before = 0;
	for (const auto k : items) {
		const double w = weights.empty() ? 1.0 : weights[k];
		if (before + w / 2 >= target) {
			break;
		}
		before += w;
		++split;
	}

	std::vector<std::size_t> right(items.begin() + static_cast<std::ptrdiff_t>(split), items.end());
	items.resize(split);
	bisect(centers, cells, weights, std::move(items), first_rank, left_ranks, owners);
	bisect(centers, cells, weights, std::move(right), first_rank + left_ranks, rank_count - left_ranks, owners);
}

} // namespace

std::vector<CellId> hilbert_rank_order(const Topology& topology, std::span<const CellId> cells)
{
	std::uint64_t largest = 1;
	for (std::size_t d = 0; d < 3; ++d) {
		largest = std::max(largest, topology.index_extent(d));
	}
	unsigned bits = 0;
	while ((std::uint64_t{1} << bits) < largest) {
		++bits;
	}
	bits += 1; // doubled lattice
	const unsigned drop = bits > 21 ? bits - 21 : 0;
	bits -= drop;

	std::vector<std::pair<std::uint64_t, CellId>> keyed;
	keyed.reserve(cells.size());
	for (const CellId id : cells) {
		auto center = doubled_center(topology, id);
		for (auto& c : center) {
			c >>= drop;
		}
		keyed.emplace_back(hilbert_index(center, bits), id);
	}
	std::sort(keyed.begin(), keyed.end());

	std::vector<CellId> order;
	order.reserve(keyed.size());
	for (const auto& [key, id] : keyed) {
		order.push_back(id);
	}
	return order;
}

std::vector<int> partition(const PartitionMethod& method, const Topology& topology, std::span<const CellId> cells,
                           std::span<const double> weights, int rank_count, std::span<const int> current)
{
	if (rank_count < 1) {
		throw std::invalid_argument("partition: need at least one rank");
	}
	if (!weights.empty() && weights.size() != cells.size()) {
		throw std::invalid_argument("partition: weights must align with cells");
	}
	for (const double w : weights) {
		if (!(w > 0)) {
			throw std::invalid_argument("partition: weights must be positive");
		}
	}
	if (!std::is_sorted(cells.begin(), cells.end())) {
		throw std::invalid_argument("partition: cells must be sorted");
	}

	std::vector<int> owners(cells.size(), 0);
	switch (method.kind) {
	case PartitionKind::none:
		if (current.size() != cells.size()) {
			throw std::invalid_argument("partition: NONE needs the current owners");
		}
		owners.assign(current.begin(), current.end());
		break;

	case PartitionKind::random: {
		std::mt19937_64 generator(method.seed);
		for (auto& owner : owners) {
			const auto draw = static_cast<unsigned __int128>(generator()) * static_cast<unsigned>(rank_count);
			owner = static_cast<int>(draw >> 64);
		}
		break;
	}

	case PartitionKind::block: {
		std::vector<std::size_t> order(cells.size());
		std::iota(order.begin(), order.end(), 0);
		chunk_by_weight(order, weights, 0, rank_count, owners);
		break;
	}

	case PartitionKind::hilbert_sfc: {
		const auto curve = hilbert_rank_order(topology, cells);
		std::vector<std::size_t> order;
		order.reserve(curve.size());
		for (const CellId id : curve) {
			order.push_back(static_cast<std::size_t>(std::lower_bound(cells.begin(), cells.end(), id) - cells.begin()));
		}
		chunk_by_weight(order, weights, 0, rank_count, owners);
		break;
	}

	case PartitionKind::rcb: {
		std::vector<std::array<std::uint64_t, 3>> centers;
		centers.reserve(cells.size());
		for (const CellId id : cells) {
			centers.push_back(doubled_center(topology, id));
		}
		std::vector<std::size_t> items(cells.size());
		std::iota(items.begin(), items.end(), 0);
		bisect(centers, cells, weights, std::move(items), 0, rank_count, owners);
		break;
	}
	}
	return owners;
}

double local_cell_fraction(std::span<const std::size_t> counts)
{
	if (counts.empty()) {
		throw std::invalid_argument("local_cell_fraction: no ranks");
	}
	const auto [min_it, max_it] = std::minmax_element(counts.begin(), counts.end());
	if (*min_it == 0) {
		return std::numeric_limits<double>::infinity();
	}
	return static_cast<double>(*max_it) / static_cast<double>(*min_it);
}

} // namespace gridforge
