#include "n2/data/dicom.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <set>

#include <gdcmAttribute.h>
#include <gdcmImageReader.h>
#include <gdcmItem.h>
#include <gdcmReader.h>
#include <gdcmSequenceOfItems.h>
#include <gdcmWriter.h>

#include "n2/error.hpp"
#include "n2/random.hpp"

namespace n2 {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCtImageStorage = "1.2.840.10008.5.1.4.1.1.2";
constexpr const char* kRtStructStorage = "1.2.840.10008.5.1.4.1.1.481.3";

const gdcm::Tag kSopClass(0x0008, 0x0016), kSopInstance(0x0008, 0x0018), kModality(0x0008, 0x0060);
const gdcm::Tag kPatientId(0x0010, 0x0020), kStudyUid(0x0020, 0x000d), kSeriesUid(0x0020, 0x000e);
const gdcm::Tag kInstance(0x0020, 0x0013), kPosition(0x0020, 0x0032), kOrientation(0x0020, 0x0037);
const gdcm::Tag kFrameOfRef(0x0020, 0x0052), kSliceThickness(0x0018, 0x0050), kPixelSpacing(0x0028, 0x0030);
const gdcm::Tag kIntercept(0x0028, 0x1052), kSlope(0x0028, 0x1053), kPhotometric(0x0028, 0x0004);
const gdcm::Tag kPixelData(0x7fe0, 0x0010);
const gdcm::Tag kStructureSetLabel(0x3006, 0x0002), kRefFrameSeq(0x3006, 0x0010), kRoiSeq(0x3006, 0x0020);
const gdcm::Tag kRoiNumber(0x3006, 0x0022), kRoiFrameOfRef(0x3006, 0x0024), kRoiName(0x3006, 0x0026);
const gdcm::Tag kRoiAlgorithm(0x3006, 0x0036), kRoiContourSeq(0x3006, 0x0039), kContourSeq(0x3006, 0x0040);
const gdcm::Tag kContourType(0x3006, 0x0042), kContourPoints(0x3006, 0x0046), kContourData(0x3006, 0x0050);
const gdcm::Tag kRefRoiNumber(0x3006, 0x0084);

std::string get_string(const gdcm::DataSet& ds, const gdcm::Tag& tag) {
  if (!ds.FindDataElement(tag)) return {};
  const auto& de = ds.GetDataElement(tag);
  const gdcm::ByteValue* bv = de.GetByteValue();
  if (!bv) return {};
  std::string s(bv->GetPointer(), bv->GetLength());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  const auto first = s.find_first_not_of(' ');
  return first == std::string::npos ? std::string{} : s.substr(first);
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\\', start);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(start, end - start);
    item.erase(0, item.find_first_not_of(' '));
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) {
      double v = 0;
      const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
      if (res.ec != std::errc() || res.ptr != item.data() + item.size())
        throw IngestionError("malformed number '" + item + "' in " + what);
      out.push_back(v);
    }
    start = end + 1;
  }
  return out;
}

std::vector<double> get_numbers(const gdcm::DataSet& ds, const gdcm::Tag& tag, const std::string& what) {
  return parse_numbers(get_string(ds, tag), what);
}

void put_string(gdcm::DataSet& ds, const gdcm::Tag& tag, gdcm::VR vr, std::string value) {
  if (value.size() % 2) value.push_back(vr == gdcm::VR::UI ? '\0' : ' ');
  gdcm::DataElement de(tag);
  de.SetVR(vr);
  de.SetByteValue(value.data(), static_cast<std::uint32_t>(value.size()));
  ds.Replace(de);
}

std::string format_ds(double v) {
  char buf[32];
  for (int prec = 10; prec >= 4; --prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strlen(buf) <= 16) return buf;
  }
  return buf;
}

std::string join_ds(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += '\\';
    s += format_ds(values[i]);
  }
  return s;
}

/// Deterministic UID under the 2.25 (UUID-derived) root.
std::string make_uid(const std::string& seed) {
  return "2.25." + std::to_string(derive_seed(hash_string(seed), {0x4e32}) >> 1);
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

gdcm::SmartPointer<gdcm::SequenceOfItems> sequence(const gdcm::DataSet& ds, const gdcm::Tag& tag) {
  if (!ds.FindDataElement(tag)) return nullptr;
  return ds.GetDataElement(tag).GetValueAsSQ();
}

void put_sequence(gdcm::DataSet& ds, const gdcm::Tag& tag, const std::vector<gdcm::DataSet>& items) {
  gdcm::SmartPointer<gdcm::SequenceOfItems> sq = new gdcm::SequenceOfItems;
  sq->SetLengthToUndefined();
  for (const auto& nested : items) {
    gdcm::Item item;
    item.SetVLToUndefined();
    item.SetNestedDataSet(nested);
    sq->AddItem(item);
  }
  gdcm::DataElement de(tag);
  de.SetVR(gdcm::VR::SQ);
  de.SetValue(*sq);
  de.SetVLToUndefined();
  ds.Replace(de);
}

void write_file(const fs::path& path, gdcm::File& file) {
  file.GetHeader().SetDataSetTransferSyntax(gdcm::TransferSyntax::ExplicitVRLittleEndian);
  gdcm::Writer w;
  w.SetFile(file);
  w.SetFileName(path.string().c_str());
  if (!w.Write()) throw IngestionError("cannot write DICOM file " + path.string());
}

std::string list_files(const std::vector<fs::path>& files) {
  std::string s;
  for (const auto& f : files) s += "\n  " + f.string();
  return s;
}

struct SliceFile {
  fs::path path;
  std::string series;
  std::string study;
  std::string frame_of_ref;
  std::optional<long> instance;
  Vec3 position{};
  std::vector<double> orientation;
  std::vector<double> spacing;
};

}  // namespace

Point2 CtGeometry::to_pixel(const Vec3& p, std::size_t z) const {
  const Vec3& o = positions.at(z);
  const Vec3 d{p[0] - o[0], p[1] - o[1], p[2] - o[2]};
  return {dot(d, row_dir) / col_spacing, dot(d, col_dir) / row_spacing};
}

std::int64_t CtGeometry::slice_of(const Vec3& p) const {
  if (positions.empty()) return -1;
  const double pos = dot(p, normal);
  double half_gap = 0.5;
  if (positions.size() > 1) half_gap = 0.5 * std::abs(dot(positions[1], normal) - dot(positions[0], normal));
  std::int64_t best = -1;
  double best_d = half_gap + 1e-6;
  for (std::size_t z = 0; z < positions.size(); ++z) {
    const double d = std::abs(dot(positions[z], normal) - pos);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int64_t>(z);
    }
  }
  return best;
}

CtSeries load_ct_series(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("CT directory not found: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename().string().rfind('.', 0) != 0) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());

  std::vector<SliceFile> slices;
  std::vector<fs::path> unreadable;
  for (const auto& p : paths) {
    gdcm::Reader r;
    r.SetFileName(p.string().c_str());
    if (!r.Read()) {
      unreadable.push_back(p);
      continue;
    }
    const auto& ds = r.GetFile().GetDataSet();
    if (get_string(ds, kModality) != "CT") continue;
    SliceFile s;
    s.path = p;
    s.series = get_string(ds, kSeriesUid);
    s.study = get_string(ds, kStudyUid);
    s.frame_of_ref = get_string(ds, kFrameOfRef);
    const auto inst = get_numbers(ds, kInstance, p.string() + " InstanceNumber");
    if (!inst.empty()) s.instance = std::lround(inst[0]);
    const auto pos = get_numbers(ds, kPosition, p.string() + " ImagePositionPatient");
    if (pos.size() != 3) throw IngestionError("missing ImagePositionPatient in " + p.string());
    s.position = {pos[0], pos[1], pos[2]};
    s.orientation = get_numbers(ds, kOrientation, p.string() + " ImageOrientationPatient");
    if (s.orientation.size() != 6) throw IngestionError("missing ImageOrientationPatient in " + p.string());
    s.spacing = get_numbers(ds, kPixelSpacing, p.string() + " PixelSpacing");
    if (s.spacing.size() != 2) throw IngestionError("missing PixelSpacing in " + p.string());
    slices.push_back(std::move(s));
  }
  if (!unreadable.empty()) throw IngestionError("unreadable DICOM files in " + dir.string() + ":" + list_files(unreadable));
  if (slices.empty()) throw IngestionError("no CT images in " + dir.string());

  std::map<std::string, std::vector<fs::path>> by_series;
  for (const auto& s : slices) by_series[s.series].push_back(s.path);
  if (by_series.size() > 1) {
    std::string msg = "mixed CT series in " + dir.string() + ":";
    for (const auto& [uid, files] : by_series) msg += "\n series " + uid + ":" + list_files(files);
    throw IngestionError(msg);
  }

  std::vector<fs::path> no_instance;
  std::map<long, std::vector<fs::path>> by_instance;
  for (const auto& s : slices) {
    if (!s.instance) no_instance.push_back(s.path);
    else by_instance[*s.instance].push_back(s.path);
  }
  if (!no_instance.empty()) throw IngestionError("CT files without InstanceNumber:" + list_files(no_instance));
  std::vector<fs::path> dupes;
  for (const auto& [n, files] : by_instance)
    if (files.size() > 1) dupes.insert(dupes.end(), files.begin(), files.end());
  if (!dupes.empty()) throw IngestionError("duplicate CT InstanceNumbers:" + list_files(dupes));
  const long first = by_instance.begin()->first, last = by_instance.rbegin()->first;
  if (last - first + 1 != static_cast<long>(by_instance.size())) {
    std::string msg = "missing CT InstanceNumbers between " + std::to_string(first) + " and " + std::to_string(last) + ":";
    for (long n = first; n <= last; ++n)
      if (!by_instance.count(n)) msg += " " + std::to_string(n);
    std::vector<fs::path> all;
    for (const auto& s : slices) all.push_back(s.path);
    throw IngestionError(msg + "; files present:" + list_files(all));
  }

  CtSeries out;
  auto& g = out.geometry;
  const auto& o = slices[0].orientation;
  g.row_dir = {o[0], o[1], o[2]};
  g.col_dir = {o[3], o[4], o[5]};
  g.normal = cross(g.row_dir, g.col_dir);
  g.row_spacing = slices[0].spacing[0];
  g.col_spacing = slices[0].spacing[1];
  g.series_uid = slices[0].series;
  g.study_uid = slices[0].study;
  g.frame_of_reference_uid = slices[0].frame_of_ref;
  std::stable_sort(slices.begin(), slices.end(), [&](const SliceFile& a, const SliceFile& b) {
    return dot(a.position, g.normal) < dot(b.position, g.normal);
  });
  for (std::size_t i = 1; i < slices.size(); ++i)
    if (std::abs(dot(slices[i].position, g.normal) - dot(slices[i - 1].position, g.normal)) < 1e-6)
      throw IngestionError("coincident slice positions:" + list_files({slices[i - 1].path, slices[i].path}));

  auto& v = out.volume;
  v.depth = static_cast<std::int64_t>(slices.size());
  for (std::size_t z = 0; z < slices.size(); ++z) {
    const auto& s = slices[z];
    gdcm::ImageReader ir;
    ir.SetFileName(s.path.string().c_str());
    if (!ir.Read()) throw IngestionError("cannot decode pixel data of " + s.path.string());
    const gdcm::Image& img = ir.GetImage();
    const auto cols = static_cast<std::int64_t>(img.GetDimension(0));
    const auto rows = static_cast<std::int64_t>(img.GetDimension(1));
    if (z == 0) {
      v.height = rows;
      v.width = cols;
      v.image.resize(static_cast<std::size_t>(v.depth * rows * cols));
    } else if (rows != v.height || cols != v.width) {
      throw IngestionError("slice size differs in " + s.path.string());
    }
    const auto& ds = ir.GetFile().GetDataSet();
    const auto slope_v = get_numbers(ds, kSlope, s.path.string() + " RescaleSlope");
    const auto icpt_v = get_numbers(ds, kIntercept, s.path.string() + " RescaleIntercept");
    const double slope = slope_v.empty() ? 1.0 : slope_v[0];
    const double icpt = icpt_v.empty() ? 0.0 : icpt_v[0];
    std::vector<char> buf(img.GetBufferLength());
    if (!img.GetBuffer(buf.data())) throw IngestionError("cannot decode pixel data of " + s.path.string());
    const auto n = static_cast<std::size_t>(rows * cols);
    auto* dst = v.image.data() + z * n;
    const auto type = img.GetPixelFormat().GetScalarType();
    auto convert = [&](auto tag) {
      using T = decltype(tag);
      if (buf.size() < n * sizeof(T)) throw IngestionError("short pixel data in " + s.path.string());
      for (std::size_t i = 0; i < n; ++i) {
        T raw;
        std::memcpy(&raw, buf.data() + i * sizeof(T), sizeof(T));
        dst[i] = static_cast<double>(raw) * slope + icpt;
      }
    };
    switch (type) {
      case gdcm::PixelFormat::INT16: convert(std::int16_t{}); break;
      case gdcm::PixelFormat::UINT16: convert(std::uint16_t{}); break;
      case gdcm::PixelFormat::INT8: convert(std::int8_t{}); break;
      case gdcm::PixelFormat::UINT8: convert(std::uint8_t{}); break;
      case gdcm::PixelFormat::INT32: convert(std::int32_t{}); break;
      case gdcm::PixelFormat::UINT32: convert(std::uint32_t{}); break;
      default: throw IngestionError("unsupported pixel format in " + s.path.string());
    }
    g.positions.push_back(s.position);
    g.files.push_back(s.path);
  }
  const double dz = slices.size() > 1 ? std::abs(dot(g.positions.back(), g.normal) - dot(g.positions.front(), g.normal)) /
                                            static_cast<double>(slices.size() - 1)
                                      : 1.0;
  v.spacing = {dz, g.row_spacing, g.col_spacing};
  v.subject_id = dir.filename().string();
  v.source = {{"series_uid", g.series_uid}, {"frame_of_reference_uid", g.frame_of_reference_uid}};
  return out;
}

CtGeometry write_ct_series(const fs::path& dir, const VolumeRecord& v, CtWriteOptions opt) {
  if (v.depth < 1 || v.height < 1 || v.width < 1 || v.image.size() != static_cast<std::size_t>(v.depth * v.height * v.width))
    throw DataError("write_ct_series: inconsistent volume geometry");
  if (opt.slope == 0) throw DataError("write_ct_series: slope must be nonzero");
  const std::string seed = opt.patient_id + "/" + v.subject_id;
  if (opt.study_uid.empty()) opt.study_uid = make_uid(seed + "/study");
  if (opt.series_uid.empty()) opt.series_uid = make_uid(seed + "/series");
  if (opt.frame_of_reference_uid.empty()) opt.frame_of_reference_uid = make_uid(seed + "/frame");
  fs::create_directories(dir);

  CtGeometry g;
  g.series_uid = opt.series_uid;
  g.study_uid = opt.study_uid;
  g.frame_of_reference_uid = opt.frame_of_reference_uid;
  g.row_spacing = v.spacing[1];
  g.col_spacing = v.spacing[2];
  const auto n = static_cast<std::size_t>(v.height * v.width);
  for (std::int64_t z = 0; z < v.depth; ++z) {
    std::vector<std::int16_t> stored(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = (v.image[static_cast<std::size_t>(z) * n + i] - opt.intercept) / opt.slope;
      if (s != std::round(s) || s < -32768 || s > 32767)
        throw DataError("write_ct_series: value at slice " + std::to_string(z) + " is not an int16 under the rescale");
      stored[i] = static_cast<std::int16_t>(s);
    }
    const Vec3 pos{opt.origin[0], opt.origin[1], opt.origin[2] + static_cast<double>(z) * v.spacing[0]};
    gdcm::SmartPointer<gdcm::File> owned = new gdcm::File;  // the writer keeps a reference
    gdcm::File& file = *owned;
    auto& ds = file.GetDataSet();
    const std::string sop = make_uid(seed + "/slice/" + std::to_string(z));
    put_string(ds, kSopClass, gdcm::VR::UI, kCtImageStorage);
    put_string(ds, kSopInstance, gdcm::VR::UI, sop);
    put_string(ds, kModality, gdcm::VR::CS, "CT");
    put_string(ds, kPatientId, gdcm::VR::LO, opt.patient_id);
    put_string(ds, kStudyUid, gdcm::VR::UI, opt.study_uid);
    put_string(ds, kSeriesUid, gdcm::VR::UI, opt.series_uid);
    put_string(ds, kFrameOfRef, gdcm::VR::UI, opt.frame_of_reference_uid);
    put_string(ds, kInstance, gdcm::VR::IS, std::to_string(z + 1));
    put_string(ds, kPosition, gdcm::VR::DS, join_ds({pos[0], pos[1], pos[2]}));
    put_string(ds, kOrientation, gdcm::VR::DS, "1\\0\\0\\0\\1\\0");
    put_string(ds, kSliceThickness, gdcm::VR::DS, format_ds(v.spacing[0]));
    put_string(ds, kPixelSpacing, gdcm::VR::DS, join_ds({v.spacing[1], v.spacing[2]}));
    put_string(ds, kIntercept, gdcm::VR::DS, format_ds(opt.intercept));
    put_string(ds, kSlope, gdcm::VR::DS, format_ds(opt.slope));
    put_string(ds, kPhotometric, gdcm::VR::CS, "MONOCHROME2");
    gdcm::Attribute<0x0028, 0x0002> spp{1};
    gdcm::Attribute<0x0028, 0x0010> rows{static_cast<std::uint16_t>(v.height)};
    gdcm::Attribute<0x0028, 0x0011> cols{static_cast<std::uint16_t>(v.width)};
    gdcm::Attribute<0x0028, 0x0100> alloc{16};
    gdcm::Attribute<0x0028, 0x0101> bits{16};
    gdcm::Attribute<0x0028, 0x0102> high{15};
    gdcm::Attribute<0x0028, 0x0103> repr{1};
    for (const auto& de : {spp.GetAsDataElement(), rows.GetAsDataElement(), cols.GetAsDataElement(),
                           alloc.GetAsDataElement(), bits.GetAsDataElement(), high.GetAsDataElement(),
                           repr.GetAsDataElement()})
      ds.Replace(de);
    gdcm::DataElement pixels(kPixelData);
    pixels.SetVR(gdcm::VR::OW);
    pixels.SetByteValue(reinterpret_cast<const char*>(stored.data()), static_cast<std::uint32_t>(n * sizeof(std::int16_t)));
    ds.Replace(pixels);

    char name[32];
    std::snprintf(name, sizeof(name), "slice_%04lld.dcm", static_cast<long long>(z));
    write_file(dir / name, file);
    g.positions.push_back(pos);
    g.files.push_back(dir / name);
  }
  return g;
}

StructureSet read_rtstruct(const fs::path& path) {
  gdcm::Reader r;
  r.SetFileName(path.string().c_str());
  if (!r.Read()) throw IngestionError("cannot read structure set " + path.string());
  const auto& ds = r.GetFile().GetDataSet();
  if (get_string(ds, kModality) != "RTSTRUCT") throw IngestionError(path.string() + " is not an RTSTRUCT object");

  StructureSet set;
  set.frame_of_reference_uid = get_string(ds, kFrameOfRef);
  if (auto sq = sequence(ds, kRefFrameSeq); sq && sq->GetNumberOfItems() > 0)
    set.frame_of_reference_uid = get_string(sq->GetItem(1).GetNestedDataSet(), kFrameOfRef);

  std::map<int, std::size_t> index;
  if (auto sq = sequence(ds, kRoiSeq)) {
    for (gdcm::SequenceOfItems::SizeType i = 1; i <= sq->GetNumberOfItems(); ++i) {
      const auto& item = sq->GetItem(i).GetNestedDataSet();
      RoiContours roi;
      const auto num = get_numbers(item, kRoiNumber, path.string() + " ROINumber");
      if (num.empty()) throw IngestionError(path.string() + ": ROI without ROINumber");
      roi.number = static_cast<int>(num[0]);
      roi.name = get_string(item, kRoiName);
      roi.frame_of_reference_uid = get_string(item, kRoiFrameOfRef);
      index[roi.number] = set.rois.size();
      set.rois.push_back(std::move(roi));
    }
  }
  if (auto sq = sequence(ds, kRoiContourSeq)) {
    for (gdcm::SequenceOfItems::SizeType i = 1; i <= sq->GetNumberOfItems(); ++i) {
      const auto& item = sq->GetItem(i).GetNestedDataSet();
      const auto ref = get_numbers(item, kRefRoiNumber, path.string() + " ReferencedROINumber");
      if (ref.empty() || !index.count(static_cast<int>(ref[0])))
        throw IngestionError(path.string() + ": contour references an unknown ROI");
      auto& roi = set.rois[index[static_cast<int>(ref[0])]];
      auto contours = sequence(item, kContourSeq);
      if (!contours) continue;
      for (gdcm::SequenceOfItems::SizeType c = 1; c <= contours->GetNumberOfItems(); ++c) {
        const auto& cds = contours->GetItem(c).GetNestedDataSet();
        const std::string type = get_string(cds, kContourType);
        if (type != "CLOSED_PLANAR") continue;
        const auto data = get_numbers(cds, kContourData, path.string() + " ContourData");
        if (data.size() % 3 != 0) throw IngestionError(path.string() + ": ContourData length not a multiple of 3");
        std::vector<Vec3> pts;
        for (std::size_t k = 0; k < data.size(); k += 3) pts.push_back({data[k], data[k + 1], data[k + 2]});
        roi.contours.push_back(std::move(pts));
      }
    }
  }
  return set;
}

void write_rtstruct(const fs::path& path, const StructureSet& set, const CtGeometry& ref) {
  gdcm::SmartPointer<gdcm::File> owned = new gdcm::File;
  gdcm::File& file = *owned;
  auto& ds = file.GetDataSet();
  const std::string seed = ref.series_uid + "/rtstruct/" + path.filename().string();
  put_string(ds, kSopClass, gdcm::VR::UI, kRtStructStorage);
  put_string(ds, kSopInstance, gdcm::VR::UI, make_uid(seed + "/sop"));
  put_string(ds, kModality, gdcm::VR::CS, "RTSTRUCT");
  put_string(ds, kStudyUid, gdcm::VR::UI, ref.study_uid);
  put_string(ds, kSeriesUid, gdcm::VR::UI, make_uid(seed + "/series"));
  put_string(ds, kStructureSetLabel, gdcm::VR::SH, "N2");

  gdcm::DataSet frame;
  put_string(frame, kFrameOfRef, gdcm::VR::UI, set.frame_of_reference_uid);
  put_sequence(ds, kRefFrameSeq, {frame});

  std::vector<gdcm::DataSet> rois, roi_contours;
  for (const auto& roi : set.rois) {
    gdcm::DataSet r;
    put_string(r, kRoiNumber, gdcm::VR::IS, std::to_string(roi.number));
    put_string(r, kRoiFrameOfRef, gdcm::VR::UI,
               roi.frame_of_reference_uid.empty() ? set.frame_of_reference_uid : roi.frame_of_reference_uid);
    put_string(r, kRoiName, gdcm::VR::LO, roi.name);
    put_string(r, kRoiAlgorithm, gdcm::VR::CS, "MANUAL");
    rois.push_back(r);

    std::vector<gdcm::DataSet> contours;
    for (const auto& pts : roi.contours) {
      gdcm::DataSet c;
      put_string(c, kContourType, gdcm::VR::CS, "CLOSED_PLANAR");
      put_string(c, kContourPoints, gdcm::VR::IS, std::to_string(pts.size()));
      std::vector<double> flat;
      for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
      put_string(c, kContourData, gdcm::VR::DS, join_ds(flat));
      contours.push_back(c);
    }
    gdcm::DataSet rc;
    put_string(rc, kRefRoiNumber, gdcm::VR::IS, std::to_string(roi.number));
    put_sequence(rc, kContourSeq, contours);
    roi_contours.push_back(rc);
  }
  put_sequence(ds, kRoiSeq, rois);
  put_sequence(ds, kRoiContourSeq, roi_contours);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, file);
}

std::vector<std::uint8_t> rtstruct_to_masks(const StructureSet& set, const CtSeries& ct,
                                            const std::vector<std::string>& class_names,
                                            std::vector<std::string>* warnings) {
  const auto& g = ct.geometry;
  const auto& v = ct.volume;
  auto check_frame = [&](const std::string& uid, const std::string& what) {
    if (!uid.empty() && !g.frame_of_reference_uid.empty() && uid != g.frame_of_reference_uid)
      throw IngestionError(what + " frame of reference " + uid + " does not match CT frame " + g.frame_of_reference_uid);
  };
  check_frame(set.frame_of_reference_uid, "structure set");

  const auto plane = static_cast<std::size_t>(v.height * v.width);
  std::vector<std::uint8_t> masks(class_names.size() * static_cast<std::size_t>(v.depth) * plane, 0);
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto it = std::find_if(set.rois.begin(), set.rois.end(), [&](const RoiContours& r) { return r.name == class_names[c]; });
    if (it == set.rois.end()) {
      if (warnings) warnings->push_back("structure '" + class_names[c] + "' not found; its channel is left empty");
      continue;
    }
    check_frame(it->frame_of_reference_uid, "ROI '" + it->name + "'");
    std::map<std::int64_t, std::vector<Polygon>> per_slice;
    for (const auto& contour : it->contours) {
      if (contour.size() < 3) continue;
      const auto z = g.slice_of(contour[0]);
      if (z < 0) continue;
      Polygon poly;
      for (const auto& p : contour) poly.push_back(g.to_pixel(p, static_cast<std::size_t>(z)));
      per_slice[z].push_back(std::move(poly));
    }
    for (const auto& [z, polys] : per_slice) {
      const auto fill = rasterize_even_odd(polys, v.height, v.width);
      std::copy(fill.begin(), fill.end(),
                masks.begin() + static_cast<std::ptrdiff_t>((c * static_cast<std::size_t>(v.depth) + static_cast<std::size_t>(z)) * plane));
    }
  }
  return masks;
}

VolumeRecord ingest_subject(const fs::path& dir, const std::string& subject_id,
                            const std::vector<std::string>& class_names, std::vector<std::string>* warnings) {
  CtSeries ct = load_ct_series(dir);
  std::vector<fs::path> structs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename().string().rfind('.', 0) == 0) continue;
    gdcm::Reader r;
    r.SetFileName(e.path().string().c_str());
    if (r.Read() && get_string(r.GetFile().GetDataSet(), kModality) == "RTSTRUCT") structs.push_back(e.path());
  }
  std::sort(structs.begin(), structs.end());
  if (structs.empty()) throw IngestionError("no RTSTRUCT file in " + dir.string());
  if (structs.size() > 1) throw IngestionError("several RTSTRUCT files in " + dir.string() + ":" + list_files(structs));
  const auto set = read_rtstruct(structs[0]);
  VolumeRecord v = ct.volume;
  v.subject_id = subject_id;
  v.class_names = class_names;
  v.masks = rtstruct_to_masks(set, ct, class_names, warnings);
  v.source["rtstruct"] = structs[0].filename().string();
  return v;
}

CtGeometry export_subject_dicom(const fs::path& dir, const VolumeRecord& volume, double hu_scale) {
  volume.validate();
  VolumeRecord ct = volume;
  for (auto& x : ct.image) x = std::round(x * hu_scale);
  const auto g = write_ct_series(dir, ct);
  StructureSet set{g.frame_of_reference_uid, {}};
  const auto to_patient = [&](double px, double py, std::size_t z) {
    const Vec3& o = g.positions[z];
    Vec3 out{};
    for (int k = 0; k < 3; ++k) out[k] = o[k] + px * g.col_spacing * g.row_dir[k] + py * g.row_spacing * g.col_dir[k];
    return out;
  };
  for (std::int64_t c = 0; c < volume.num_classes(); ++c) {
    RoiContours roi{static_cast<int>(c + 1), volume.class_names[static_cast<std::size_t>(c)], g.frame_of_reference_uid, {}};
    for (std::int64_t z = 0; z < volume.depth; ++z)
      for (std::int64_t y = 0; y < volume.height; ++y)
        for (std::int64_t x = 0; x < volume.width;) {
          if (!volume.mask(c, z, y, x)) {
            ++x;
            continue;
          }
          std::int64_t end = x;
          while (end < volume.width && volume.mask(c, z, y, end)) ++end;
          const auto zi = static_cast<std::size_t>(z);
          const double x0 = static_cast<double>(x) - 0.5, x1 = static_cast<double>(end) - 0.5;
          const double y0 = static_cast<double>(y) - 0.5, y1 = static_cast<double>(y) + 0.5;
          roi.contours.push_back({to_patient(x0, y0, zi), to_patient(x1, y0, zi), to_patient(x1, y1, zi), to_patient(x0, y1, zi)});
          x = end;
        }
    set.rois.push_back(std::move(roi));
  }
  write_rtstruct(dir / "rtstruct.dcm", set, g);
  return g;
}

}  // namespace n2
