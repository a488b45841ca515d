#include "apps/dump.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace gridforge::apps {

DumpRecord make_record(const Topology& topology, CellId id, std::vector<double> values)
{
	return DumpRecord{id, topology.level_of(id), topology.indices_of(id), std::move(values)};
}

std::string format_double(double value)
{
	char buffer[64];
	const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
	if (result.ec != std::errc{}) {
		throw std::runtime_error("format_double: conversion failed");
	}
	return std::string(buffer, result.ptr);
}

std::string format_dump(const Topology& topology, std::vector<DumpRecord> records)
{
	std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
	std::string out = "dccrg-dump 1";
	for (const auto n : topology.level0_cells()) {
		out += ' ';
		out += std::to_string(n);
	}
	out += ' ';
	out += std::to_string(topology.max_refinement_level());
	out += '\n';
	for (const auto& record : records) {
		out += std::to_string(record.id);
		out += ' ';
		out += std::to_string(record.level);
		for (std::size_t d = 0; d < 3; ++d) {
			out += ' ';
			out += std::to_string(record.indices[d]);
		}
		for (const double value : record.values) {
			out += ' ';
			out += format_double(value);
		}
		out += '\n';
	}
	return out;
}

namespace {

template <typename T>
T parse_number(std::string_view token, std::size_t line)
{
	T value{};
	const auto result = std::from_chars(token.data(), token.data() + token.size(), value);
	if (result.ec != std::errc{} || result.ptr != token.data() + token.size()) {
		throw std::runtime_error("dump line " + std::to_string(line) + ": bad number '" + std::string(token) + "'");
	}
	return value;
}

std::vector<std::string_view> split(std::string_view line)
{
	std::vector<std::string_view> tokens;
	std::size_t pos = 0;
	while (pos < line.size()) {
		const auto start = line.find_first_not_of(' ', pos);
		if (start == std::string_view::npos) {
			break;
		}
		const auto end = std::min(line.find(' ', start), line.size());
		tokens.push_back(line.substr(start, end - start));
		pos = end;
	}
	return tokens;
}

} // namespace

Dump parse_dump(std::string_view text)
{
	Dump dump;
	std::size_t line_number = 0;
	bool header_seen = false;
	while (!text.empty()) {
		const auto end = std::min(text.find('\n'), text.size());
		const std::string_view line = text.substr(0, end);
		text.remove_prefix(std::min(end + 1, text.size()));
		++line_number;
		if (line.empty()) {
			continue;
		}
		const auto tokens = split(line);
		if (!header_seen) {
			if (tokens.size() != 6 || tokens[0] != "dccrg-dump" || tokens[1] != "1") {
				throw std::runtime_error("dump: missing or unsupported header");
			}
			for (std::size_t d = 0; d < 3; ++d) {
				dump.header.level0_cells[d] = parse_number<std::uint64_t>(tokens[2 + d], line_number);
			}
			dump.header.max_level = parse_number<int>(tokens[5], line_number);
			header_seen = true;
			continue;
		}
		if (tokens.size() < 5) {
			throw std::runtime_error("dump line " + std::to_string(line_number) + ": too few fields");
		}
		DumpRecord record;
		record.id = parse_number<std::uint64_t>(tokens[0], line_number);
		record.level = parse_number<int>(tokens[1], line_number);
		for (std::size_t d = 0; d < 3; ++d) {
			record.indices[d] = parse_number<std::uint64_t>(tokens[2 + d], line_number);
		}
		for (std::size_t k = 5; k < tokens.size(); ++k) {
			record.values.push_back(parse_number<double>(tokens[k], line_number));
		}
		dump.records.push_back(std::move(record));
	}
	if (!header_seen) {
		throw std::runtime_error("dump: empty input");
	}
	return dump;
}

std::string format_vtk(const Topology& topology, const ConstantGeometry<double>& geometry,
                       const std::vector<DumpRecord>& records, const std::vector<std::string>& value_names)
{
	std::ostringstream out;
	out.precision(17);
	out << "# vtk DataFile Version 2.0\n"
	    << "gridforge cells\n"
	    << "ASCII\n"
	    << "DATASET UNSTRUCTURED_GRID\n"
	    << "POINTS " << records.size() * 8 << " double\n";
	for (const auto& record : records) {
		const auto box = geometry.cell_bounding_box(topology, record.id);
		// VTK_HEXAHEDRON vertex order: bottom face counter-clockwise, then top face
		const int corners[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
		                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
		for (const auto& corner : corners) {
			for (int d = 0; d < 3; ++d) {
				out << (corner[d] ? box.max[d] : box.min[d]) << (d < 2 ? ' ' : '\n');
			}
		}
	}
	out << "CELLS " << records.size() << ' ' << records.size() * 9 << '\n';
	for (std::size_t k = 0; k < records.size(); ++k) {
		out << 8;
		for (std::size_t v = 0; v < 8; ++v) {
			out << ' ' << 8 * k + v;
		}
		out << '\n';
	}
	out << "CELL_TYPES " << records.size() << '\n';
	for (std::size_t k = 0; k < records.size(); ++k) {
		out << "12\n";
	}
	out << "CELL_DATA " << records.size() << '\n';
	out << "SCALARS level int 1\nLOOKUP_TABLE default\n";
	for (const auto& record : records) {
		out << record.level << '\n';
	}
	for (std::size_t column = 0; column < value_names.size(); ++column) {
		out << "SCALARS " << value_names[column] << " double 1\nLOOKUP_TABLE default\n";
		for (const auto& record : records) {
			out << (column < record.values.size() ? format_double(record.values[column]) : "0") << '\n';
		}
	}
	return out.str();
}

void write_file(const std::string& path, std::string_view contents)
{
	std::ofstream file(path, std::ios::binary);
	if (!file) {
		throw std::runtime_error("cannot open '" + path + "' for writing");
	}
	file.write(contents.data(), static_cast<std::streamsize>(contents.size()));
	if (!file) {
		throw std::runtime_error("cannot write '" + path + "'");
	}
}

} // namespace gridforge::apps
