#include "pointsentinel/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace ps::data {

std::string to_string(TargetClass c) {
  return c == TargetClass::carina ? "carina" : "ett_tip";
}

TargetClass target_class_from_string(const std::string& s) {
  if (s == "carina") return TargetClass::carina;
  if (s == "ett_tip") return TargetClass::ett_tip;
  throw ValidationError(format_msg("unknown target class '", s, "'"));
}

Point line_to_tip(const LineAnnotation& line) {
  PS_CHECK(!line.points.empty(), "line_to_tip: empty line annotation for case '",
           line.case_id, "'");
  Point best = line.points.front();
  for (const Point& p : line.points) {
    if (p.y >= best.y) best = p;  // last-wins on ties
  }
  return best;
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split_by_patient(
    const std::vector<SampleRecord>& records, double train_frac, std::uint64_t seed) {
  PS_CHECK(train_frac > 0.0 && train_frac < 1.0, "split_by_patient: train_frac must be in (0,1), got ",
           train_frac);
  std::set<std::string> patient_set;
  for (const SampleRecord& r : records) patient_set.insert(r.patient_id);
  PS_CHECK(patient_set.size() >= 2, "split_by_patient: need at least 2 patients, got ",
           patient_set.size());

  std::vector<std::string> patients(patient_set.begin(), patient_set.end());
  Rng rng(seed);
  rng.shuffle(patients);

  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(patients.size())));
  std::set<std::string> train_patients(patients.begin(), patients.begin() + std::min(n_train, patients.size()));

  std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> out;
  for (const SampleRecord& r : records) {
    (train_patients.count(r.patient_id) ? out.first : out.second).push_back(r);
  }
  return out;
}

// --- CSV ------------------------------------------------------------------------

namespace {

constexpr const char* kCsvHeader =
    "case_id,patient_id,target_class,x,y,pixel_spacing_mm,image_path,height,width";

std::string fmt_float(float v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

float parse_float(const std::string& field, int line_no, const char* what) {
  float v = 0.0f;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError(format_msg("records csv line ", line_no, ": bad ", what, " '", field, "'"));
  }
  return v;
}

int parse_int(const std::string& field, int line_no, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError(format_msg("records csv line ", line_no, ": bad ", what, " '", field, "'"));
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

void check_plain_field(const std::string& v, const char* what) {
  PS_CHECK(v.find(',') == std::string::npos && v.find('\n') == std::string::npos &&
               v.find('\r') == std::string::npos,
           "record field ", what, " contains a separator character: '", v, "'");
}

void validate_record(const SampleRecord& r, int line_no) {
  const std::string where =
      line_no > 0 ? format_msg("records csv line ", line_no, ": ") : std::string();
  if (r.height <= 0 || r.width <= 0) {
    throw ValidationError(format_msg(where, "image dims must be positive, got ", r.height,
                                     "x", r.width));
  }
  if (r.point) {
    if (!(r.point->x >= 0.0f && r.point->x < static_cast<float>(r.width) &&
          r.point->y >= 0.0f && r.point->y < static_cast<float>(r.height))) {
      throw ValidationError(format_msg(where, "point (", r.point->x, ",", r.point->y,
                                       ") outside image ", r.height, "x", r.width));
    }
  }
  if (r.pixel_spacing_mm && !(*r.pixel_spacing_mm > 0.0f)) {
    throw ValidationError(format_msg(where, "pixel_spacing_mm must be positive, got ",
                                     *r.pixel_spacing_mm));
  }
}

}  // namespace

std::vector<SampleRecord> read_records(const std::string& csv_path) {
  std::ifstream in(csv_path);
  PS_IO_CHECK(in.good(), "cannot open records csv '", csv_path, "'");
  std::string line;
  PS_CHECK(std::getline(in, line), "records csv '", csv_path, "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  PS_CHECK(line == kCsvHeader, "records csv '", csv_path, "' line 1: unexpected header '", line,
           "'");

  std::vector<SampleRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    PS_CHECK(f.size() == 9, "records csv line ", line_no, ": expected 9 fields, got ", f.size());

    SampleRecord r;
    r.case_id = f[0];
    r.patient_id = f[1];
    r.target_class = target_class_from_string(f[2]);
    const bool has_x = !f[3].empty();
    const bool has_y = !f[4].empty();
    PS_CHECK(has_x == has_y, "records csv line ", line_no, ": x and y must both be set or both empty");
    if (has_x) {
      r.point = Point{parse_float(f[3], line_no, "x"), parse_float(f[4], line_no, "y")};
    }
    if (!f[5].empty()) r.pixel_spacing_mm = parse_float(f[5], line_no, "pixel_spacing_mm");
    r.image_path = f[6];
    r.height = parse_int(f[7], line_no, "height");
    r.width = parse_int(f[8], line_no, "width");
    validate_record(r, line_no);
    out.push_back(std::move(r));
  }
  return out;
}

void write_records(const std::vector<SampleRecord>& records, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  PS_IO_CHECK(out.good(), "cannot write records csv '", csv_path, "'");
  out << kCsvHeader << "\n";
  for (const SampleRecord& r : records) {
    validate_record(r, 0);
    check_plain_field(r.case_id, "case_id");
    check_plain_field(r.patient_id, "patient_id");
    check_plain_field(r.image_path, "image_path");
    out << r.case_id << ',' << r.patient_id << ',' << to_string(r.target_class) << ',';
    if (r.point) out << fmt_float(r.point->x) << ',' << fmt_float(r.point->y);
    else out << ',';
    out << ',';
    if (r.pixel_spacing_mm) out << fmt_float(*r.pixel_spacing_mm);
    out << ',' << r.image_path << ',' << r.height << ',' << r.width << "\n";
  }
  PS_IO_CHECK(out.good(), "failed writing records csv '", csv_path, "'");
}

// --- line annotations -------------------------------------------------------------

std::vector<LineAnnotation> read_line_annotations(const std::string& path) {
  std::ifstream in(path);
  PS_IO_CHECK(in.good(), "cannot open line annotations '", path, "'");
  std::vector<LineAnnotation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(format_msg("line annotations '", path, "' line ", line_no, ": ",
                                       e.what()));
    }
    PS_CHECK(j.is_object() && j.contains("case_id") && j.contains("points"),
             "line annotations '", path, "' line ", line_no,
             ": expected {\"case_id\", \"points\"}");
    LineAnnotation ann;
    ann.case_id = j.at("case_id").get<std::string>();
    for (const auto& pj : j.at("points")) {
      PS_CHECK(pj.is_array() && pj.size() == 2, "line annotations '", path, "' line ", line_no,
               ": points must be [x,y] pairs");
      ann.points.push_back(Point{pj.at(0).get<float>(), pj.at(1).get<float>()});
    }
    PS_CHECK(!ann.points.empty(), "line annotations '", path, "' line ", line_no,
             ": empty point list");
    out.push_back(std::move(ann));
  }
  return out;
}

void write_line_annotations(const std::vector<LineAnnotation>& lines, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  PS_IO_CHECK(out.good(), "cannot write line annotations '", path, "'");
  for (const LineAnnotation& ann : lines) {
    nlohmann::json j;
    j["case_id"] = ann.case_id;
    nlohmann::json pts = nlohmann::json::array();
    for (const Point& p : ann.points) pts.push_back({p.x, p.y});
    j["points"] = pts;
    out << j.dump() << "\n";
  }
  PS_IO_CHECK(out.good(), "failed writing line annotations '", path, "'");
}

// --- PGM ---------------------------------------------------------------------------

namespace {

int next_pgm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments, returns the next non-negative integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  PS_CHECK(c != EOF && std::isdigit(c), "pgm '", path, "': malformed header");
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    PS_CHECK(v <= 1 << 30, "pgm '", path, "': header value too large");
    c = in.get();
  }
  if (c != EOF) in.unget();
  return static_cast<int>(v);
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  PS_IO_CHECK(in.good(), "cannot open image '", path, "'");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  PS_CHECK(m0 == 'P' && m1 == '5', "pgm '", path, "': bad magic (want P5)");
  const int w = next_pgm_token(in, path);
  const int h = next_pgm_token(in, path);
  const int maxval = next_pgm_token(in, path);
  PS_CHECK(w > 0 && h > 0, "pgm '", path, "': bad dimensions ", w, "x", h);
  PS_CHECK(maxval > 0 && maxval <= 65535, "pgm '", path, "': unsupported maxval ", maxval);
  const int c = in.get();
  PS_CHECK(c != EOF && std::isspace(c), "pgm '", path, "': missing whitespace after maxval");

  Image img(h, w);
  const std::size_t n = img.size();
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * static_cast<std::size_t>(bytes));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  PS_IO_CHECK(static_cast<std::size_t>(in.gcount()) == raw.size(), "pgm '", path,
              "': truncated pixel data");
  const float inv = 1.0f / static_cast<float>(maxval);
  if (bytes == 1) {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<float>(raw[i]) * inv;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
      img.pixels[i] = static_cast<float>(v) * inv;
    }
  }
  return img;
}

void save_image(const Image& img, const std::string& path, int maxval) {
  PS_CHECK(maxval == 255 || maxval == 65535, "save_image: maxval must be 255 or 65535, got ",
           maxval);
  PS_CHECK(img.height > 0 && img.width > 0, "save_image: empty image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  PS_IO_CHECK(out.good(), "cannot write image '", path, "'");
  out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  const std::size_t n = img.size();
  std::vector<unsigned char> raw(n * (maxval > 255 ? 2u : 1u));
  for (std::size_t i = 0; i < n; ++i) {
    long q = std::lround(static_cast<double>(img.pixels[i]) * maxval);
    q = std::clamp(q, 0L, static_cast<long>(maxval));
    if (maxval > 255) {
      raw[2 * i] = static_cast<unsigned char>(q >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
    } else {
      raw[i] = static_cast<unsigned char>(q);
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  PS_IO_CHECK(out.good(), "failed writing image '", path, "'");
}

// --- sample loading -------------------------------------------------------------

std::vector<LoadedSample> load_samples(const std::vector<SampleRecord>& records,
                                       const std::string& base_dir) {
  std::vector<LoadedSample> out;
  out.reserve(records.size());
  for (const SampleRecord& r : records) {
    fs::path p(r.image_path);
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    LoadedSample s;
    s.image = load_image(p.string());
    PS_CHECK(s.image.height == r.height && s.image.width == r.width, "image '", p.string(),
             "' is ", s.image.height, "x", s.image.width, " but record '", r.case_id,
             "' says ", r.height, "x", r.width);
    s.record = r;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LoadedSample> load_samples_csv(const std::string& csv_path) {
  const std::vector<SampleRecord> records = read_records(csv_path);
  return load_samples(records, fs::path(csv_path).parent_path().string());
}

}  // namespace ps::data
