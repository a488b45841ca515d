#pragma once

#include "gridforge/topology.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

namespace gridforge {

enum class PartitionKind { none, random, block, rcb, hilbert_sfc };

struct PartitionMethod {
	PartitionKind kind = PartitionKind::block;
	/// Seed of the RANDOM method; ignored by the others.
	std::uint64_t seed = 0;

	static PartitionMethod none() { return {PartitionKind::none, 0}; }
	static PartitionMethod block() { return {PartitionKind::block, 0}; }
	static PartitionMethod rcb() { return {PartitionKind::rcb, 0}; }
	static PartitionMethod hilbert() { return {PartitionKind::hilbert_sfc, 0}; }
	static PartitionMethod random(std::uint64_t seed) { return {PartitionKind::random, seed}; }
};

/// Accepts NONE, RANDOM, BLOCK, RCB, HSFC/HILBERT (case-insensitive).
PartitionKind parse_partition_kind(std::string_view name);
std::string_view to_string(PartitionKind kind);

/// Manual cell -> rank assignments that override any partitioner.
using PinSet = std::map<CellId, int>;

/*!
Index of a point along the 3D Hilbert curve filling the cube [0, 2^bits)^3.
Uses the transpose formulation of the curve (Skilling's algorithm).
*/
std::uint64_t hilbert_index(std::array<std::uint64_t, 3> point, unsigned bits);

/// Inverse of hilbert_index.
std::array<std::uint64_t, 3> hilbert_point(std::uint64_t index, unsigned bits);

/*!
Orders cells by the Hilbert index of their index-space centers. Centers are
taken on the doubled lattice so they stay integral; ties go to the smaller id.
*/
std::vector<CellId> hilbert_rank_order(const Topology& topology, std::span<const CellId> cells);

/*!
Assigns every cell to a rank in [0, rank_count). Pure and deterministic, so
every rank computes the same answer from the replicated cell list.

`cells` must be sorted ascending; `weights` is either empty (unit weights) or
aligned with `cells`. `current` (aligned with `cells`) is returned unchanged
by the NONE method and may be empty otherwise.
*/
std::vector<int> partition(const PartitionMethod& method, const Topology& topology, std::span<const CellId> cells,
                           std::span<const double> weights, int rank_count, std::span<const int> current = {});

/// N_max / N_min over per-rank cell counts; +infinity if some rank has none.
double local_cell_fraction(std::span<const std::size_t> counts);

} // namespace gridforge
