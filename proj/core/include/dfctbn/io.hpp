#pragma once

// File formats: visit CSV, model text file, chart CSV/SVG, coefficient-tensor
// CSV and scenario specs. Times are decimal years throughout. All writers
// print doubles with 17 significant digits, so text round trips are exact.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dfctbn/chart.hpp"
#include "dfctbn/cohort.hpp"
#include "dfctbn/ctbn.hpp"
#include "dfctbn/model.hpp"

namespace dfctbn {

struct VisitFileSchema {
  FactorSchema factors = FactorSchema::standard();
  /// Keep going past columns that are not in the schema instead of rejecting the header.
  bool pass_through_unknown = false;
};

struct ParseReport {
  std::size_t rows = 0;
  std::size_t patients = 0;
  /// Rows with an NA or empty condition/factor cell; they are skipped.
  std::size_t dropped = 0;
  std::vector<std::size_t> dropped_lines;
  std::vector<std::string> ignored_columns;
};

/// Rows may appear in any order; each patient's rows are sorted by time.
/// Throws DataError (with the line number) on malformed rows and duplicate
/// (patient, time) pairs, InputError when the file cannot be opened.
std::vector<Trajectory> parse_visits(const std::string& path, const VisitFileSchema& schema,
                                     ParseReport* report = nullptr);
std::vector<Trajectory> parse_visits(std::istream& in, const VisitFileSchema& schema, ParseReport* report = nullptr);

/// Header: patient_id,visit_time,<conditions>,<factors>,record.
void write_visits(const std::vector<Trajectory>& trajectories, const FactorSchema& schema, std::ostream& out);
void write_visits(const std::vector<Trajectory>& trajectories, const FactorSchema& schema, const std::string& path);

struct ModelMetadata {
  FactorSchema schema = FactorSchema::standard();
  double lambda = 0.0;
  double edge_threshold = 1e-6;
  std::string library_version;
  /// Free-form provenance, e.g. "cv" or "fixed"; no newlines.
  std::string note;
};

struct ModelFile {
  CompactParams params;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> structure;
  ModelMetadata metadata;
};

/// The last line carries a CRC-32 of every preceding byte.
void write_model(const ModelFile& model, std::ostream& out);
void write_model(const ModelFile& model, const std::string& path);
/// Throws ChecksumError on truncation or corruption and VersionError on a
/// format mismatch; never returns a partial model.
ModelFile read_model(std::istream& in);
ModelFile read_model(const std::string& path);

/// Columns index,time,statistic,UCL,LCL,signal.
void write_chart_series(const ChartSeries& series, std::ostream& out);
void write_chart_series(const ChartSeries& series, const std::string& path);
ChartSeries read_chart_series(std::istream& in);
ChartSeries read_chart_series(const std::string& path);
/// Line plot of the statistic against its limits; signals drawn as red dots.
void write_chart_svg(const ChartSeries& series, std::ostream& out, const std::string& title = {});
void write_chart_svg(const ChartSeries& series, const std::string& path, const std::string& title = {});

/// Long format: step,time,row,child,coefficient,value.
void write_tensors(const std::vector<Tensor3>& tensors, const std::vector<double>& times, std::ostream& out);
void write_tensors(const std::vector<Tensor3>& tensors, const std::vector<double>& times, const std::string& path);
struct TensorSeries {
  std::vector<Tensor3> tensors;
  std::vector<double> times;
};
TensorSeries read_tensors(std::istream& in);
TensorSeries read_tensors(const std::string& path);

/// key = value lines; '#' starts a comment; `change` may repeat.
ScenarioSpec parse_scenario(std::istream& in);
ScenarioSpec parse_scenario(const std::string& path);
void write_scenario(const ScenarioSpec& spec, std::ostream& out);

/// %.17g.
std::string format_double(double v);

}  // namespace dfctbn
