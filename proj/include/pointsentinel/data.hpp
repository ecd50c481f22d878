#ifndef POINTSENTINEL_DATA_HPP
#define POINTSENTINEL_DATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pointsentinel/image.hpp"

namespace ps::data {

// Annotation and dataset I/O: sample records, line annotations, patient-level
// splits, PGM images.

enum class TargetClass { carina, ett_tip };
std::string to_string(TargetClass c);
TargetClass target_class_from_string(const std::string& s);

struct Point {
  float x = 0.0f;
  float y = 0.0f;
};

struct SampleRecord {
  std::string case_id;
  std::string patient_id;
  std::string image_path;
  TargetClass target_class = TargetClass::ett_tip;
  std::optional<Point> point;               // image pixels; absent for negatives
  std::optional<float> pixel_spacing_mm;    // mm per pixel
  int height = 0;
  int width = 0;
};

struct LineAnnotation {
  std::string case_id;
  std::vector<Point> points;
};

// The tip is the bottom-most point (maximal y, raster convention); ties go to
// the last such point in annotation order.
Point line_to_tip(const LineAnnotation& line);

// Partition at patient granularity. Patients are sorted before the seeded
// shuffle so the split does not depend on record order. The train side gets
// round(train_frac * n_patients) patients.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split_by_patient(
    const std::vector<SampleRecord>& records, double train_frac, std::uint64_t seed);

// CSV schema (UTF-8, header row):
//   case_id,patient_id,target_class,x,y,pixel_spacing_mm,image_path,height,width
// Empty string encodes an absent optional. Malformed rows raise errors naming
// the 1-based line number. Image files are not checked here.
std::vector<SampleRecord> read_records(const std::string& csv_path);
void write_records(const std::vector<SampleRecord>& records, const std::string& csv_path);

// Line annotations as JSON-lines: {"case_id": ..., "points": [[x,y],...]}.
std::vector<LineAnnotation> read_line_annotations(const std::string& path);
void write_line_annotations(const std::vector<LineAnnotation>& lines, const std::string& path);

// Binary PGM (P5), maxval 255 or 65535. Values are normalized by maxval on
// load; 16-bit samples are big-endian per the format.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path, int maxval = 65535);

// A record joined with its decoded image.
struct LoadedSample {
  Image image;
  SampleRecord record;
};

// Loads every record's image. Relative image paths resolve against the CSV's
// directory when `base_dir` is empty.
std::vector<LoadedSample> load_samples(const std::vector<SampleRecord>& records,
                                       const std::string& base_dir);
std::vector<LoadedSample> load_samples_csv(const std::string& csv_path);

}  // namespace ps::data

#endif  // POINTSENTINEL_DATA_HPP
