#pragma once

#include <string>
#include <string_view>

#include "eqq/asympt.hpp"
#include "eqq/measure.hpp"
#include "eqq/quantize.hpp"
#include "eqq/transport.hpp"

namespace eqq {

// Text files. Writes go to a temporary sibling that is renamed into place.
std::string read_text(const std::string& path);
void write_text_atomic(const std::string& path, const std::string& content);

// 17 significant digits, enough to parse back to the same double.
std::string format_double(double v);

MeasureSpec parse_spec(std::string_view json_text);
std::string spec_to_json(const MeasureSpec& spec);

// A grid is stored as a JSON header at `path` plus a CSV of nonzero cells
// (flat_index,mass) whose file name the header records.
void write_grid(const std::string& path, const GridDensity& grid);
GridDensity read_grid(const std::string& path);

// One point per row, columns x1..xd after a header line.
std::string cloud_to_csv(const PointCloud& cloud);
PointCloud cloud_from_csv(std::string_view csv, double total);
std::string cloud_to_json(const PointCloud& cloud);
PointCloud cloud_from_json(std::string_view json_text);

std::string result_to_json(const QuantizerResult& result, int n, double p);
QuantizerResult result_from_json(std::string_view json_text);

std::string cost_to_json(double p, double cost, std::string_view mode, std::string_view cell_model);

SweepResult sweep_from_csv(std::string_view csv);

std::string report_to_json(const BoundReport& report);
std::string coefficient_to_json(const CoefficientEstimate& estimate, int d, std::size_t rows);

}  // namespace eqq
