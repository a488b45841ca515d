#pragma once

#include "gridforge/geometry.hpp"
#include "gridforge/topology.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace gridforge::apps {

struct DumpRecord {
	CellId id = error_cell;
	int level = 0;
	Indices indices{};
	std::vector<double> values;

	friend bool operator==(const DumpRecord&, const DumpRecord&) = default;
};

struct DumpHeader {
	std::array<std::uint64_t, 3> level0_cells{};
	int max_level = 0;

	friend bool operator==(const DumpHeader&, const DumpHeader&) = default;
};

struct Dump {
	DumpHeader header;
	std::vector<DumpRecord> records;
};

DumpRecord make_record(const Topology& topology, CellId id, std::vector<double> values);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/*!
Text dump: `dccrg-dump 1 <nx> <ny> <nz> <L>`, then one line per cell
`<id> <level> <ix> <iy> <iz> <values...>` in ascending id order.
*/
std::string format_dump(const Topology& topology, std::vector<DumpRecord> records);
Dump parse_dump(std::string_view text);

/// Legacy VTK unstructured grid of hexahedra, one scalar array per value column.
std::string format_vtk(const Topology& topology, const ConstantGeometry<double>& geometry,
                       const std::vector<DumpRecord>& records, const std::vector<std::string>& value_names);

/// Throws std::runtime_error when the file cannot be written.
void write_file(const std::string& path, std::string_view contents);

} // namespace gridforge::apps
