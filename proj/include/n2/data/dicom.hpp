#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "n2/data/raster.hpp"
#include "n2/data/volume.hpp"

namespace n2 {

using Vec3 = std::array<double, 3>;

/// Patient-space geometry of a CT series, slices in ascending position.
struct CtGeometry {
  std::string series_uid;
  std::string study_uid;
  std::string frame_of_reference_uid;
  Vec3 row_dir{1, 0, 0};  // direction of increasing column index
  Vec3 col_dir{0, 1, 0};  // direction of increasing row index
  Vec3 normal{0, 0, 1};
  double row_spacing = 1;  // distance between rows (mm)
  double col_spacing = 1;  // distance between columns (mm)
  std::vector<Vec3> positions;  // ImagePositionPatient per slice
  std::vector<std::filesystem::path> files;  // source file per slice

  /// Continuous (column, row) pixel coordinates of a patient-space point on
  /// slice z.
  Point2 to_pixel(const Vec3& p, std::size_t z) const;
  /// Slice whose plane lies within half a slice gap of `p`, or -1.
  std::int64_t slice_of(const Vec3& p) const;
};

struct CtSeries {
  VolumeRecord volume;  // image in Hounsfield units, no mask classes
  CtGeometry geometry;
};

/// Reads the single CT series in `dir`. Slices are sorted by position along
/// the slice normal and rescaled (stored * slope + intercept). Non-CT DICOM
/// objects (e.g. structure sets) are skipped. Throws IngestionError, listing
/// the files involved, for unreadable files, mixed series, absent or
/// duplicate instance numbers, gaps in the instance sequence, or coincident
/// slice positions.
CtSeries load_ct_series(const std::filesystem::path& dir);

struct CtWriteOptions {
  double slope = 1.0;
  double intercept = -1024.0;
  Vec3 origin{0, 0, 0};
  std::string patient_id = "PHANTOM";
  std::string study_uid;   // generated when empty
  std::string series_uid;  // generated when empty
  std::string frame_of_reference_uid;  // generated when empty
};

/// Writes one int16 CT file per slice (`slice_NNNN.dcm`, axial orientation,
/// spacing from the volume). Values must map to integers in int16 range
/// under the rescale. Returns the written geometry.
CtGeometry write_ct_series(const std::filesystem::path& dir, const VolumeRecord& volume,
                           CtWriteOptions options = {});

struct RoiContours {
  int number = 0;
  std::string name;
  std::string frame_of_reference_uid;
  /// Closed planar contours; each is a list of patient-space points.
  std::vector<std::vector<Vec3>> contours;
};

struct StructureSet {
  std::string frame_of_reference_uid;
  std::vector<RoiContours> rois;
};

StructureSet read_rtstruct(const std::filesystem::path& path);
void write_rtstruct(const std::filesystem::path& path, const StructureSet& set, const CtGeometry& reference);

/// Rasterizes the named structures onto the CT grid, one channel per name.
/// Contours on one slice combine by even-odd parity, so nested contours
/// carve holes. A missing structure yields an empty channel and a message in
/// `warnings`; a frame-of-reference mismatch throws IngestionError.
std::vector<std::uint8_t> rtstruct_to_masks(const StructureSet& set, const CtSeries& ct,
                                            const std::vector<std::string>& class_names,
                                            std::vector<std::string>* warnings = nullptr);

/// Loads the CT series and the single structure set found in `dir` and
/// returns a volume with one mask channel per requested class.
VolumeRecord ingest_subject(const std::filesystem::path& dir, const std::string& subject_id,
                            const std::vector<std::string>& class_names,
                            std::vector<std::string>* warnings = nullptr);

/// Writes a volume as a CT series (intensities times `hu_scale`, rounded)
/// plus an RTSTRUCT whose per-row run contours reproduce every mask exactly
/// under ingest_subject.
CtGeometry export_subject_dicom(const std::filesystem::path& dir, const VolumeRecord& volume, double hu_scale = 1000.0);

}  // namespace n2
