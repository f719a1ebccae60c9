#include "dfctbn/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <zlib.h>

#include "dfctbn/error.hpp"
#include "dfctbn/version.hpp"

namespace dfctbn {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool get_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::optional<long long> to_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "' for reading");
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "' for writing");
  return f;
}

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw InputError("failed writing '" + path + "'");
}

DataError line_error(std::size_t line, const std::string& what) {
  return DataError("line " + std::to_string(line) + ": " + what);
}

std::string factor_label(const FactorSpec& f, double value) {
  const double scaled = value * (f.levels() - 1);
  const long level = std::lround(scaled);
  if (level < 0 || level >= f.levels() || f.encode(static_cast<int>(level)) != value) {
    throw DataError("value " + format_double(value) + " is not a level of factor " + f.name);
  }
  return f.labels[static_cast<std::size_t>(level)];
}

// Shortest text that reads back to the same double; used where humans edit the file.
std::string shortest(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool is_missing(const std::string& cell) { return cell.empty() || lower(cell) == "na"; }

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- visits

std::vector<Trajectory> parse_visits(const std::string& path, const VisitFileSchema& schema, ParseReport* report) {
  auto f = open_in(path);
  return parse_visits(f, schema, report);
}

std::vector<Trajectory> parse_visits(std::istream& in, const VisitFileSchema& schema, ParseReport* report) {
  const FactorSchema& fs = schema.factors;
  const int d = static_cast<int>(fs.conditions.size());
  const int m = static_cast<int>(fs.factors.size());
  ParseReport rep;

  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (get_line(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw DataError("visit file has no header row");
  const auto header = split_csv(line);
  int col_id = -1, col_time = -1, col_record = -1;
  std::vector<int> col_cond(static_cast<std::size_t>(d), -1), col_factor(static_cast<std::size_t>(m), -1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    const int ci = static_cast<int>(c);
    auto claim = [&](int& slot) {
      if (slot >= 0) throw line_error(lineno, "duplicate column '" + h + "'");
      slot = ci;
    };
    if (h == "patient_id") {
      claim(col_id);
    } else if (h == "visit_time") {
      claim(col_time);
    } else if (h == "record") {
      claim(col_record);
    } else if (auto it = std::find(fs.conditions.begin(), fs.conditions.end(), h); it != fs.conditions.end()) {
      claim(col_cond[static_cast<std::size_t>(it - fs.conditions.begin())]);
    } else {
      bool found = false;
      for (int f = 0; f < m; ++f) {
        if (fs.factors[static_cast<std::size_t>(f)].name == h) {
          claim(col_factor[static_cast<std::size_t>(f)]);
          found = true;
        }
      }
      if (!found) {
        if (!schema.pass_through_unknown) throw line_error(lineno, "unknown column '" + h + "'");
        rep.ignored_columns.push_back(h);
      }
    }
  }
  if (col_id < 0) throw line_error(lineno, "missing column 'patient_id'");
  if (col_time < 0) throw line_error(lineno, "missing column 'visit_time'");
  for (int i = 0; i < d; ++i) {
    if (col_cond[static_cast<std::size_t>(i)] < 0) throw line_error(lineno, "missing condition column '" + fs.conditions[static_cast<std::size_t>(i)] + "'");
  }
  for (int f = 0; f < m; ++f) {
    if (col_factor[static_cast<std::size_t>(f)] < 0) throw line_error(lineno, "missing factor column '" + fs.factors[static_cast<std::size_t>(f)].name + "'");
  }

  struct Row {
    std::size_t line;
    TrajectoryEvent event;
  };
  std::map<std::string, std::vector<Row>> by_patient;
  while (get_line(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ++rep.rows;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw line_error(lineno, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    const std::string& id = cells[static_cast<std::size_t>(col_id)];
    if (id.empty()) throw line_error(lineno, "empty patient_id");
    const auto time = to_double(cells[static_cast<std::size_t>(col_time)]);
    if (!time || !std::isfinite(*time) || *time < 0.0) throw line_error(lineno, "visit_time must be a non-negative number");

    bool missing = false;
    for (int i = 0; i < d; ++i) missing |= is_missing(cells[static_cast<std::size_t>(col_cond[static_cast<std::size_t>(i)])]);
    for (int f = 0; f < m; ++f) missing |= is_missing(cells[static_cast<std::size_t>(col_factor[static_cast<std::size_t>(f)])]);
    if (missing) {
      ++rep.dropped;
      rep.dropped_lines.push_back(lineno);
      continue;
    }
    std::vector<std::uint8_t> states(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      const std::string& c = cells[static_cast<std::size_t>(col_cond[static_cast<std::size_t>(i)])];
      if (c != "0" && c != "1") throw line_error(lineno, "condition '" + fs.conditions[static_cast<std::size_t>(i)] + "' must be 0 or 1, found '" + c + "'");
      states[static_cast<std::size_t>(i)] = c == "1" ? 1 : 0;
    }
    Eigen::VectorXd z(m);
    for (int f = 0; f < m; ++f) {
      const auto& spec = fs.factors[static_cast<std::size_t>(f)];
      try {
        z(f) = spec.encode(spec.parse_level(cells[static_cast<std::size_t>(col_factor[static_cast<std::size_t>(f)])]));
      } catch (const InputError& e) {
        throw line_error(lineno, e.what());
      }
    }
    EventKind kind = EventKind::Visit;
    if (col_record >= 0) {
      const std::string r = lower(cells[static_cast<std::size_t>(col_record)]);
      if (r == "transition") {
        kind = EventKind::Transition;
      } else if (r != "visit" && !r.empty()) {
        throw line_error(lineno, "record must be 'visit' or 'transition'");
      }
    }
    by_patient[id].push_back({lineno, {*time, ConditionProfile(states), RiskFactors::from_covariates(z), kind}});
  }

  std::vector<Trajectory> out;
  for (auto& [id, rows] : by_patient) {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.event.time < b.event.time; });
    Trajectory t;
    t.patient_id = id;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && rows[i].event.time == rows[i - 1].event.time) {
        const auto [a, b] = std::minmax(rows[i - 1].line, rows[i].line);
        throw line_error(b, "duplicate visit for patient '" + id + "' at time " + format_double(rows[i].event.time) +
                                " (also on line " + std::to_string(a) + ")");
      }
      t.events.push_back(rows[i].event);
    }
    out.push_back(std::move(t));
  }
  rep.patients = out.size();
  if (report) *report = rep;
  return out;
}

void write_visits(const std::vector<Trajectory>& trajectories, const FactorSchema& schema, std::ostream& out) {
  out << "patient_id,visit_time";
  for (const auto& c : schema.conditions) out << ',' << c;
  for (const auto& f : schema.factors) out << ',' << f.name;
  out << ",record\n";
  for (const auto& t : trajectories) {
    if (t.patient_id.find_first_of(",\n\r") != std::string::npos) throw DataError("patient id contains a separator");
    for (const auto& e : t.events) {
      if (e.profile.size() != static_cast<int>(schema.conditions.size()) ||
          e.z.covariates() != static_cast<int>(schema.factors.size())) {
        throw DimensionError("trajectory does not match the visit schema");
      }
      out << t.patient_id << ',' << format_double(e.time);
      for (int i = 0; i < e.profile.size(); ++i) out << ',' << static_cast<int>(e.profile[i]);
      for (std::size_t f = 0; f < schema.factors.size(); ++f) {
        out << ',' << factor_label(schema.factors[f], e.z[static_cast<Index>(f + 1)]);
      }
      out << ',' << (e.kind == EventKind::Visit ? "visit" : "transition") << '\n';
    }
  }
}

void write_visits(const std::vector<Trajectory>& trajectories, const FactorSchema& schema, const std::string& path) {
  auto f = open_out(path);
  write_visits(trajectories, schema, f);
  finish(f, path);
}

// ---------------------------------------------------------------- model

void write_model(const ModelFile& model, std::ostream& out) {
  const ModelShape& s = model.params.shape();
  if (model.metadata.schema.shape() != s) throw DimensionError("model metadata schema does not match the parameters");
  if (!model.params.values().allFinite()) throw DataError("model coefficients must be finite");
  if (model.metadata.note.find_first_of("\n\r") != std::string::npos) throw InputError("model note must be one line");
  std::ostringstream body;
  body << "dfctbn-model " << kModelFormat << '\n';
  body << "library_version " << (model.metadata.library_version.empty() ? kVersion : model.metadata.library_version) << '\n';
  body << "conditions " << s.conditions << '\n';
  body << "covariates " << s.covariates << '\n';
  body << "schema " << model.metadata.schema.describe() << '\n';
  body << "lambda " << format_double(model.metadata.lambda) << '\n';
  body << "edge_threshold " << format_double(model.metadata.edge_threshold) << '\n';
  body << "note " << model.metadata.note << '\n';
  body << "coefficients " << s.compact_size() << '\n';
  for (int i = 0; i < s.conditions; ++i) {
    for (int g = 0; g < s.groups(); ++g) {
      for (int c = 0; c < s.coefficients(); ++c) {
        body << i << ' ' << g << ' ' << c << ' ' << format_double(model.params.values()(s.index(i, g, c))) << '\n';
      }
    }
  }
  body << "structure\n";
  const auto& a = model.structure;
  const bool has = a.rows() == s.conditions && a.cols() == s.conditions;
  if (a.size() != 0 && !has) throw DimensionError("structure matrix has the wrong size");
  for (int p = 0; p < s.conditions; ++p) {
    for (int c = 0; c < s.conditions; ++c) body << (c ? " " : "") << ((has && a(p, c)) ? 1 : 0);
    body << '\n';
  }
  const std::string text = body.str();
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "crc32 %08lx\n", static_cast<unsigned long>(crc));
  out << text << buf;
}

void write_model(const ModelFile& model, const std::string& path) {
  auto f = open_out(path);
  write_model(model, f);
  finish(f, path);
}

ModelFile read_model(std::istream& in) {
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string all = ss.str();
  // The checksum line is the last non-empty line.
  std::size_t end = all.size();
  while (end > 0 && (all[end - 1] == '\n' || all[end - 1] == '\r')) --end;
  const std::size_t start = all.rfind('\n', end == 0 ? 0 : end - 1);
  const std::size_t last = start == std::string::npos ? 0 : start + 1;
  const std::string tail = all.substr(last, end - last);
  if (tail.rfind("crc32 ", 0) != 0) throw ChecksumError("model file has no checksum line (truncated?)");
  const std::string body = all.substr(0, last);
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  if (trim(tail.substr(6)) != buf) throw ChecksumError("model file checksum mismatch");

  std::istringstream b(body);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const std::string& key) {
    if (!get_line(b, line)) throw DataError("model file ends before '" + key + "'");
    ++lineno;
    if (line.rfind(key + " ", 0) != 0 && line != key) throw line_error(lineno, "expected '" + key + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
  };
  const auto fmt = to_int(next("dfctbn-model"));
  if (!fmt) throw line_error(1, "bad format version");
  if (*fmt != kModelFormat) {
    throw VersionError("model format " + std::to_string(*fmt) + " is not supported (expected " + std::to_string(kModelFormat) + ")");
  }
  ModelFile mf;
  mf.metadata.library_version = next("library_version");
  const auto d = to_int(next("conditions"));
  const auto m = to_int(next("covariates"));
  if (!d || !m) throw DataError("bad model dimensions");
  mf.metadata.schema = FactorSchema::from_description(next("schema"));
  const ModelShape shape{static_cast<int>(*d), static_cast<int>(*m)};
  shape.validate();
  if (mf.metadata.schema.shape() != shape) throw DataError("model schema does not match its dimensions");
  const auto lam = to_double(next("lambda"));
  const auto thr = to_double(next("edge_threshold"));
  if (!lam || !thr) throw DataError("bad model metadata");
  mf.metadata.lambda = *lam;
  mf.metadata.edge_threshold = *thr;
  mf.metadata.note = next("note");
  const auto n = to_int(next("coefficients"));
  if (!n || *n != shape.compact_size()) throw DataError("coefficient count does not match the model dimensions");
  mf.params = CompactParams(shape);
  std::vector<bool> seen(static_cast<std::size_t>(*n), false);
  for (long long k = 0; k < *n; ++k) {
    if (!get_line(b, line)) throw DataError("model file ends inside the coefficients");
    ++lineno;
    std::istringstream ls(line);
    int i, g, c;
    std::string v;
    if (!(ls >> i >> g >> c >> v) || i < 0 || i >= shape.conditions || g < 0 || g >= shape.groups() || c < 0 ||
        c >= shape.coefficients()) {
      throw line_error(lineno, "malformed coefficient line");
    }
    const auto value = to_double(v);
    if (!value || !std::isfinite(*value)) throw line_error(lineno, "coefficient is not a finite number");
    const auto idx = shape.index(i, g, c);
    if (seen[static_cast<std::size_t>(idx)]) throw line_error(lineno, "duplicate coefficient");
    seen[static_cast<std::size_t>(idx)] = true;
    mf.params.values()(idx) = *value;
  }
  next("structure");
  mf.structure.resize(shape.conditions, shape.conditions);
  for (int p = 0; p < shape.conditions; ++p) {
    if (!get_line(b, line)) throw DataError("model file ends inside the structure");
    ++lineno;
    std::istringstream ls(line);
    for (int c = 0; c < shape.conditions; ++c) {
      int v;
      if (!(ls >> v) || (v != 0 && v != 1)) throw line_error(lineno, "structure entries must be 0 or 1");
      mf.structure(p, c) = v == 1;
    }
  }
  return mf;
}

ModelFile read_model(const std::string& path) {
  auto f = open_in(path);
  return read_model(f);
}

// ---------------------------------------------------------------- charts

void write_chart_series(const ChartSeries& series, std::ostream& out) {
  out << "index,time,statistic,UCL,LCL,signal\n";
  for (const auto& p : series.points) {
    out << p.index << ',' << format_double(p.time) << ',' << format_double(p.statistic) << ',' << format_double(p.ucl)
        << ',' << format_double(p.lcl) << ',' << (p.signal ? 1 : 0) << '\n';
  }
}

void write_chart_series(const ChartSeries& series, const std::string& path) {
  auto f = open_out(path);
  write_chart_series(series, f);
  finish(f, path);
}

ChartSeries read_chart_series(std::istream& in) {
  std::string line;
  if (!get_line(in, line) || trim(line) != "index,time,statistic,UCL,LCL,signal") {
    throw DataError("chart file header must be index,time,statistic,UCL,LCL,signal");
  }
  ChartSeries s;
  std::size_t lineno = 1;
  while (get_line(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 6) throw line_error(lineno, "expected 6 fields");
    const auto idx = to_int(c[0]);
    const auto t = to_double(c[1]), st = to_double(c[2]), u = to_double(c[3]), l = to_double(c[4]);
    if (!idx || *idx < 0 || !t || !st || !u || !l || (c[5] != "0" && c[5] != "1")) throw line_error(lineno, "malformed chart row");
    s.points.push_back({static_cast<std::size_t>(*idx), *t, *st, *u, *l, c[5] == "1"});
  }
  return s;
}

ChartSeries read_chart_series(const std::string& path) {
  auto f = open_in(path);
  return read_chart_series(f);
}

void write_chart_svg(const ChartSeries& series, std::ostream& out, const std::string& title) {
  const double w = 800, h = 320, left = 60, right = 20, top = 30, bottom = 40;
  double lo = 0.0, hi = 1.0, t0 = 0.0, t1 = 1.0;
  if (!series.points.empty()) {
    lo = hi = series.points.front().statistic;
    t0 = series.points.front().time;
    t1 = series.points.back().time;
    for (const auto& p : series.points) {
      for (double v : {p.statistic, p.ucl, p.lcl}) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  if (t1 <= t0) t1 = t0 + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](double t) { return left + (t - t0) / (t1 - t0) * (w - left - right); };
  auto py = [&](double v) { return top + (hi - v) / (hi - lo) * (h - top - bottom); };
  auto polyline = [&](auto value, const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"";
    for (const auto& p : series.points) out << px(p.time) << ',' << py(value(p)) << ' ';
    out << "\"/>\n";
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) out << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << left << "\" y=\"" << h - 10 << "\" font-family=\"sans-serif\" font-size=\"11\">" << format_double(t0)
      << "</text>\n";
  out << "<text x=\"" << w - right - 60 << "\" y=\"" << h - 10 << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << format_double(t1) << "</text>\n";
  polyline([](const ChartPoint& p) { return p.ucl; }, "stroke=\"gray\" stroke-dasharray=\"6 3\"");
  polyline([](const ChartPoint& p) { return p.lcl; }, "stroke=\"gray\" stroke-dasharray=\"6 3\"");
  polyline([](const ChartPoint& p) { return p.statistic; }, "stroke=\"steelblue\" stroke-width=\"1.5\"");
  for (const auto& p : series.points) {
    if (p.signal) out << "<circle cx=\"" << px(p.time) << "\" cy=\"" << py(p.statistic) << "\" r=\"3\" fill=\"red\"/>\n";
  }
  out << "</svg>\n";
}

void write_chart_svg(const ChartSeries& series, const std::string& path, const std::string& title) {
  auto f = open_out(path);
  write_chart_svg(series, f, title);
  finish(f, path);
}

// ---------------------------------------------------------------- tensors

void write_tensors(const std::vector<Tensor3>& tensors, const std::vector<double>& times, std::ostream& out) {
  if (tensors.size() != times.size()) throw DimensionError("tensor and time counts differ");
  out << "step,time,row,child,coefficient,value\n";
  for (std::size_t s = 0; s < tensors.size(); ++s) {
    const auto& t = tensors[s];
    if (t.dims() != tensors.front().dims()) throw DimensionError("tensors differ in shape");
    for (Index i = 0; i < t.dim(0); ++i)
      for (Index j = 0; j < t.dim(1); ++j)
        for (Index k = 0; k < t.dim(2); ++k)
          out << s << ',' << format_double(times[s]) << ',' << i << ',' << j << ',' << k << ',' << format_double(t(i, j, k)) << '\n';
  }
}

void write_tensors(const std::vector<Tensor3>& tensors, const std::vector<double>& times, const std::string& path) {
  auto f = open_out(path);
  write_tensors(tensors, times, f);
  finish(f, path);
}

TensorSeries read_tensors(std::istream& in) {
  std::string line;
  if (!get_line(in, line) || trim(line) != "step,time,row,child,coefficient,value") {
    throw DataError("tensor file header must be step,time,row,child,coefficient,value");
  }
  struct Entry {
    long long s, i, j, k;
    double t, v;
  };
  std::vector<Entry> entries;
  long long ns = 0, ni = 0, nj = 0, nk = 0;
  std::size_t lineno = 1;
  while (get_line(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 6) throw line_error(lineno, "expected 6 fields");
    const auto s = to_int(c[0]), i = to_int(c[2]), j = to_int(c[3]), k = to_int(c[4]);
    const auto t = to_double(c[1]), v = to_double(c[5]);
    if (!s || !i || !j || !k || !t || !v || *s < 0 || *i < 0 || *j < 0 || *k < 0) throw line_error(lineno, "malformed tensor row");
    entries.push_back({*s, *i, *j, *k, *t, *v});
    ns = std::max(ns, *s + 1);
    ni = std::max(ni, *i + 1);
    nj = std::max(nj, *j + 1);
    nk = std::max(nk, *k + 1);
  }
  TensorSeries out;
  if (entries.empty()) return out;
  if (static_cast<long long>(entries.size()) != ns * ni * nj * nk) throw DataError("tensor file is incomplete");
  out.tensors.assign(static_cast<std::size_t>(ns), Tensor3({ni, nj, nk}));
  out.times.assign(static_cast<std::size_t>(ns), 0.0);
  std::vector<bool> seen(entries.size(), false);
  for (const auto& e : entries) {
    const auto flat = static_cast<std::size_t>(((e.s * ni + e.i) * nj + e.j) * nk + e.k);
    if (seen[flat]) throw DataError("duplicate tensor entry");
    seen[flat] = true;
    out.tensors[static_cast<std::size_t>(e.s)](e.i, e.j, e.k) = e.v;
    out.times[static_cast<std::size_t>(e.s)] = e.t;
  }
  return out;
}

TensorSeries read_tensors(const std::string& path) {
  auto f = open_in(path);
  return read_tensors(f);
}

// ---------------------------------------------------------------- scenarios

ScenarioSpec parse_scenario(std::istream& in) {
  ScenarioSpec s;
  s.baseline_factors.clear();
  std::string line;
  std::size_t lineno = 0;
  bool conditions_set = false;
  while (get_line(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw line_error(lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto num = [&]() {
      const auto v = to_double(value);
      if (!v) throw line_error(lineno, "'" + key + "' needs a number");
      return *v;
    };
    auto integer = [&]() {
      const auto v = to_int(value);
      if (!v) throw line_error(lineno, "'" + key + "' needs an integer");
      return *v;
    };
    auto boolean = [&]() {
      const std::string v = lower(value);
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw line_error(lineno, "'" + key + "' needs true or false");
    };
    if (key == "name") {
      s.name = value;
    } else if (key == "cadence") {
      const std::string v = lower(value);
      if (v == "months") s.cadence = Cadence::Months;
      else if (v == "years") s.cadence = Cadence::Years;
      else throw line_error(lineno, "cadence must be months or years");
    } else if (key == "phase1") {
      s.phase1_length = static_cast<int>(integer());
    } else if (key == "phase2") {
      s.phase2_length = static_cast<int>(integer());
    } else if (key == "seed") {
      const auto v = integer();
      if (v < 0) throw line_error(lineno, "seed must be non-negative");
      s.seed = static_cast<std::uint64_t>(v);
    } else if (key == "conditions") {
      s.baseline_conditions.clear();
      std::istringstream ls(value);
      std::string c;
      while (std::getline(ls, c, ',')) {
        if (!trim(c).empty()) s.baseline_conditions.push_back(trim(c));
      }
      conditions_set = true;
    } else if (key.rfind("factor.", 0) == 0) {
      s.baseline_factors.emplace_back(key.substr(7), value);
    } else if (key == "change") {
      std::istringstream ls(value);
      FactorChange c;
      if (!(ls >> c.observation >> c.factor >> c.value)) throw line_error(lineno, "change needs '<observation> <factor> <value>'");
      s.changes.push_back(c);
    } else if (key == "chart.lambda") {
      s.chart.lambda = num();
    } else if (key == "chart.L") {
      s.chart.width = num();
    } else if (key == "chart.mode") {
      const std::string v = lower(value);
      if (v == "ewma") s.chart.mode = ChartMode::Ewma;
      else if (v == "mewma") s.chart.mode = ChartMode::Mewma;
      else throw line_error(lineno, "chart.mode must be ewma or mewma");
    } else if (key == "chart.upper_only") {
      s.chart.upper_only = boolean();
    } else if (key == "ekf.process_noise") {
      s.ekf.process_noise = num();
    } else if (key == "ekf.initial_variance") {
      s.ekf.initial_variance = num();
    } else if (key == "ekf.track_all") {
      s.ekf.track_all = boolean();
    } else if (key == "mpca.energy") {
      s.mpca.energy_fraction = num();
    } else if (key == "mpca.dims") {
      std::array<Index, 3> dims{};
      std::istringstream ls(value);
      std::string part;
      for (int n = 0; n < 3; ++n) {
        if (!std::getline(ls, part, ',')) throw line_error(lineno, "mpca.dims needs three comma-separated integers");
        const auto v = to_int(trim(part));
        if (!v) throw line_error(lineno, "mpca.dims needs three comma-separated integers");
        dims[static_cast<std::size_t>(n)] = static_cast<Index>(*v);
      }
      s.mpca.target_dims = dims;
    } else {
      throw line_error(lineno, "unknown key '" + key + "'");
    }
  }
  if (!conditions_set) throw DataError("scenario is missing 'conditions'");
  return s;
}

ScenarioSpec parse_scenario(const std::string& path) {
  auto f = open_in(path);
  return parse_scenario(f);
}

void write_scenario(const ScenarioSpec& s, std::ostream& out) {
  out << "name = " << s.name << '\n';
  out << "cadence = " << (s.cadence == Cadence::Months ? "months" : "years") << '\n';
  out << "phase1 = " << s.phase1_length << '\n';
  out << "phase2 = " << s.phase2_length << '\n';
  out << "seed = " << s.seed << '\n';
  out << "conditions = ";
  for (std::size_t i = 0; i < s.baseline_conditions.size(); ++i) out << (i ? "," : "") << s.baseline_conditions[i];
  out << '\n';
  for (const auto& [f, v] : s.baseline_factors) out << "factor." << f << " = " << v << '\n';
  for (const auto& c : s.changes) out << "change = " << c.observation << ' ' << c.factor << ' ' << c.value << '\n';
  out << "chart.lambda = " << shortest(s.chart.lambda) << '\n';
  out << "chart.L = " << shortest(s.chart.width) << '\n';
  out << "chart.mode = " << (s.chart.mode == ChartMode::Ewma ? "ewma" : "mewma") << '\n';
  out << "chart.upper_only = " << (s.chart.upper_only ? "true" : "false") << '\n';
  out << "ekf.process_noise = " << shortest(s.ekf.process_noise) << '\n';
  out << "ekf.initial_variance = " << shortest(s.ekf.initial_variance) << '\n';
  out << "ekf.track_all = " << (s.ekf.track_all ? "true" : "false") << '\n';
  out << "mpca.energy = " << shortest(s.mpca.energy_fraction) << '\n';
  if (s.mpca.target_dims) {
    const auto& d = *s.mpca.target_dims;
    out << "mpca.dims = " << d[0] << ',' << d[1] << ',' << d[2] << '\n';
  }
}

}  // namespace dfctbn
