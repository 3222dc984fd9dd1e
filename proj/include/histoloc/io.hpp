#ifndef HISTOLOC_IO_HPP
#define HISTOLOC_IO_HPP

// File formats: viewer markup exports (JSON), measurement tables (CSV),
// a raw little-endian NRRD subset for volumes, P5 graymap slides with a
// JSON sidecar, and 4x4 row-major transform files. Internal frame is RAS
// millimetres; LPS inputs are converted at the boundary.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "histoloc/geometry.hpp"
#include "histoloc/histology.hpp"
#include "histoloc/plane_assignment.hpp"
#include "histoloc/stats.hpp"
#include "histoloc/volume.hpp"

namespace histoloc::io {

using nlohmann::json;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + s + "'");
    }
    if (pos != s.size()) throw ParseError("trailing characters in number: '" + s + "'");
    return v;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    return out;
}

// ---------------------------------------------------------------- markups

struct MarkupSet {
    std::vector<MarkupCurve> curves;
    std::vector<FiducialReference> fiducials;
};

inline MarkupSet read_markups(const std::string& path) {
    auto in = open_input(path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!doc.contains("markups") || !doc["markups"].is_array())
        throw ParseError(path + ": missing 'markups' array");

    MarkupSet set;
    for (const auto& m : doc["markups"]) {
        const std::string type = m.value("type", "");
        const std::string cs = m.value("coordinateSystem", "RAS");
        double sx = 1.0, sy = 1.0;
        if (cs == "LPS") {
            sx = sy = -1.0;
        } else if (cs != "RAS") {
            throw UnknownCoordinateSystem(path + ": coordinate system '" + cs + "'");
        }
        const auto readPoint = [&](const json& cp) {
            const auto& pos = cp.at("position");
            if (!pos.is_array() || pos.size() != 3)
                throw ParseError(path + ": control point position must have 3 components");
            return Point3(sx * pos[0].get<double>(), sy * pos[1].get<double>(),
                          pos[2].get<double>());
        };
        if (type == "Curve") {
            MarkupCurve curve;
            curve.label = m.value("label", "");
            for (const auto& cp : m.value("controlPoints", json::array()))
                curve.points.push_back(readPoint(cp));
            if (curve.points.empty())
                throw EmptyMarkup(path + ": curve '" + curve.label + "' has no points");
            set.curves.push_back(std::move(curve));
        } else if (type == "Fiducial") {
            const auto& cps = m.value("controlPoints", json::array());
            if (cps.empty())
                throw EmptyMarkup(path + ": fiducial markup has no points");
            FiducialReference f;
            f.label = m.value("label", "");
            f.position = readPoint(cps[0]);
            set.fiducials.push_back(std::move(f));
        } else {
            throw ParseError(path + ": unknown markup type '" + type + "'");
        }
    }
    if (set.curves.empty() && set.fiducials.empty())
        throw EmptyMarkup(path + ": no markups");
    return set;
}

inline void write_markups(const std::string& path, const MarkupSet& set) {
    json doc;
    doc["markups"] = json::array();
    for (const auto& c : set.curves) {
        json m;
        m["type"] = "Curve";
        m["label"] = c.label;
        m["coordinateSystem"] = "RAS";
        m["controlPoints"] = json::array();
        for (const auto& p : c.points)
            m["controlPoints"].push_back({{"position", {p.x(), p.y(), p.z()}}});
        doc["markups"].push_back(std::move(m));
    }
    for (const auto& f : set.fiducials) {
        json m;
        m["type"] = "Fiducial";
        m["label"] = f.label;
        m["coordinateSystem"] = "RAS";
        m["controlPoints"] = json::array(
            {{{"position", {f.position.x(), f.position.y(), f.position.z()}}}});
        doc["markups"].push_back(std::move(m));
    }
    open_output(path) << doc.dump(2) << "\n";
}

// ----------------------------------------------------------- measurements

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Header: index,d_a_mm,d_b_mm,curved,offset_mm[,d1_phy_mm,d2_phy_mm,d3_phy_mm]
inline std::vector<DissectionMeasurement> read_measurements(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() != 5 && header.size() != 8)
        throw ParseError(path + ": expected 5 or 8 columns, got " +
                         std::to_string(header.size()));
    const std::vector<std::string> expected = {"index",  "d_a_mm",    "d_b_mm",
                                               "curved", "offset_mm", "d1_phy_mm",
                                               "d2_phy_mm", "d3_phy_mm"};
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] != expected[i])
            throw ParseError(path + ": unexpected column '" + header[i] + "'");

    std::vector<DissectionMeasurement> out;
    int lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(path + ":" + std::to_string(lineNo) + ": column count mismatch");
        DissectionMeasurement m;
        m.index = static_cast<int>(parse_double(cells[0]));
        m.dA = parse_double(cells[1]);
        m.dB = parse_double(cells[2]);
        m.curvedCut = parse_double(cells[3]) != 0.0;
        m.offset = parse_double(cells[4]);
        if (m.dA < 0.0 || m.dB < 0.0)
            throw NegativeDistance(path + ":" + std::to_string(lineNo) +
                                   ": negative distance");
        if (cells.size() == 8) {
            if (!cells[5].empty()) m.d1Phy = parse_double(cells[5]);
            if (!cells[6].empty()) m.d2Phy = parse_double(cells[6]);
            if (!cells[7].empty()) m.d3Phy = parse_double(cells[7]);
        }
        out.push_back(m);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.index < b.index; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].index == out[i - 1].index)
            throw DuplicateIndex(path + ": duplicate index " +
                                 std::to_string(out[i].index));
    return out;
}

inline void write_measurements(const std::string& path,
                               const std::vector<DissectionMeasurement>& ms) {
    bool anyPhy = false;
    for (const auto& m : ms) anyPhy = anyPhy || m.d1Phy || m.d2Phy || m.d3Phy;
    auto out = open_output(path);
    out << "index,d_a_mm,d_b_mm,curved,offset_mm";
    if (anyPhy) out << ",d1_phy_mm,d2_phy_mm,d3_phy_mm";
    out << "\n";
    for (const auto& m : ms) {
        out << m.index << ',' << format_double(m.dA) << ',' << format_double(m.dB) << ','
            << (m.curvedCut ? 1 : 0) << ',' << format_double(m.offset);
        if (anyPhy) {
            out << ',' << (m.d1Phy ? format_double(*m.d1Phy) : "") << ','
                << (m.d2Phy ? format_double(*m.d2Phy) : "") << ','
                << (m.d3Phy ? format_double(*m.d3Phy) : "");
        }
        out << "\n";
    }
}

// ----------------------------------------------------------------- NRRD

// Supported subset: dimension 3, type short|float, encoding raw, little
// endian, space directions + space origin in RAS or LPS.
inline VolumeGrid read_volume(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("NRRD", 0) != 0)
        throw ParseError(path + ": not a NRRD file");

    VolumeGrid v;
    bool lps = false;
    std::string type, encoding = "raw", endian = "little";
    std::array<Vec3, 3> dirs = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    bool haveSizes = false;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break; // header terminator
        if (line[0] == '#') continue;
        const auto colon = line.find(": ");
        if (colon == std::string::npos) throw ParseError(path + ": bad header line: " + line);
        const std::string key = line.substr(0, colon);
        const std::string value = line.substr(colon + 2);

        const auto parseVec = [&](const std::string& s) {
            Vec3 out;
            if (std::sscanf(s.c_str(), "(%lf,%lf,%lf)", &out.x(), &out.y(), &out.z()) != 3)
                throw ParseError(path + ": bad vector: " + s);
            return out;
        };

        if (key == "type") {
            type = value;
        } else if (key == "dimension") {
            if (value != "3") throw ParseError(path + ": only dimension 3 supported");
        } else if (key == "space") {
            if (value == "left-posterior-superior" || value == "LPS")
                lps = true;
            else if (value != "right-anterior-superior" && value != "RAS")
                throw UnknownCoordinateSystem(path + ": space '" + value + "'");
        } else if (key == "sizes") {
            if (std::sscanf(value.c_str(), "%d %d %d", &v.dims[0], &v.dims[1],
                            &v.dims[2]) != 3)
                throw ParseError(path + ": bad sizes: " + value);
            haveSizes = true;
        } else if (key == "space directions") {
            std::stringstream ss(value);
            std::string tok;
            for (int a = 0; a < 3; ++a) {
                if (!(ss >> tok)) throw ParseError(path + ": bad space directions");
                dirs[a] = parseVec(tok);
            }
        } else if (key == "space origin") {
            v.origin = parseVec(value);
        } else if (key == "encoding") {
            encoding = value;
        } else if (key == "endian") {
            endian = value;
        }
    }

    if (encoding != "raw") throw UnsupportedEncoding(path + ": encoding '" + encoding + "'");
    if (endian != "little") throw UnsupportedEncoding(path + ": endian '" + endian + "'");
    if (!haveSizes) throw ParseError(path + ": missing sizes");
    if (type == "short" || type == "int16" || type == "signed short")
        v.scalarType = ScalarType::Short;
    else if (type == "float")
        v.scalarType = ScalarType::Float;
    else
        throw ParseError(path + ": unsupported type '" + type + "'");

    for (int a = 0; a < 3; ++a) {
        const double len = dirs[a].norm();
        if (len <= 0.0) throw ParseError(path + ": degenerate space direction");
        v.spacing[a] = len;
        v.direction.col(a) = dirs[a] / len;
    }
    if (lps) {
        v.origin.x() = -v.origin.x();
        v.origin.y() = -v.origin.y();
        v.direction.row(0) = -v.direction.row(0);
        v.direction.row(1) = -v.direction.row(1);
    }

    const std::size_t count = v.voxelCount();
    v.voxels.resize(count);
    if (v.scalarType == ScalarType::Short) {
        std::vector<std::int16_t> raw(count);
        in.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(count * sizeof(std::int16_t)));
        if (static_cast<std::size_t>(in.gcount()) != count * sizeof(std::int16_t))
            throw HeaderMismatch(path + ": voxel data shorter than sizes product");
        for (std::size_t i = 0; i < count; ++i) v.voxels[i] = raw[i];
    } else {
        in.read(reinterpret_cast<char*>(v.voxels.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
            throw HeaderMismatch(path + ": voxel data shorter than sizes product");
    }
    return v;
}

inline void write_volume(const std::string& path, const VolumeGrid& v) {
    if (v.voxels.size() != v.voxelCount())
        throw HeaderMismatch("voxel count does not match dims product");
    auto out = open_output(path);
    out << "NRRD0004\n";
    out << "type: " << (v.scalarType == ScalarType::Short ? "short" : "float") << "\n";
    out << "dimension: 3\n";
    out << "space: right-anterior-superior\n";
    out << "sizes: " << v.dims[0] << ' ' << v.dims[1] << ' ' << v.dims[2] << "\n";
    out << "space directions:";
    for (int a = 0; a < 3; ++a) {
        const Vec3 d = v.direction.col(a) * v.spacing[a];
        out << " (" << format_double(d.x()) << ',' << format_double(d.y()) << ','
            << format_double(d.z()) << ')';
    }
    out << "\n";
    out << "space origin: (" << format_double(v.origin.x()) << ','
        << format_double(v.origin.y()) << ',' << format_double(v.origin.z()) << ")\n";
    out << "encoding: raw\n";
    out << "endian: little\n";
    out << "\n";
    if (v.scalarType == ScalarType::Short) {
        std::vector<std::int16_t> raw(v.voxels.size());
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            raw[i] = static_cast<std::int16_t>(v.voxels[i]);
        out.write(reinterpret_cast<const char*>(raw.data()),
                  static_cast<std::streamsize>(raw.size() * sizeof(std::int16_t)));
    } else {
        out.write(reinterpret_cast<const char*>(v.voxels.data()),
                  static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    }
}

// ---------------------------------------------------------------- slides

// P5 graymap with a JSON sidecar (<path>.json) carrying pixel spacing and
// landmark pixel/world pairs.
inline HistologySlide read_slide(const std::string& pgmPath) {
    auto in = open_input(pgmPath);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw ParseError(pgmPath + ": not a P5 graymap");
    int width, height, maxval;
    in >> width >> height >> maxval;
    if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
        throw ParseError(pgmPath + ": bad P5 header");
    in.get(); // single whitespace after maxval

    HistologySlide s;
    s.width = width;
    s.height = height;
    s.pixels.resize(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(s.pixels.data()),
            static_cast<std::streamsize>(s.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != s.pixels.size())
        throw ParseError(pgmPath + ": truncated pixel data");

    auto side = open_input(pgmPath + ".json");
    json meta;
    try {
        side >> meta;
    } catch (const json::exception& e) {
        throw ParseError(pgmPath + ".json: " + e.what());
    }
    s.index = meta.value("index", 0);
    const auto& sp = meta.at("pixel_spacing");
    s.pixelSpacing = Vec2(sp[0].get<double>(), sp[1].get<double>());
    if (s.pixelSpacing.x() <= 0.0 || s.pixelSpacing.y() <= 0.0)
        throw ParseError(pgmPath + ".json: pixel spacing must be positive");
    for (const auto& lm : meta.value("landmarks", json::array())) {
        const auto& img = lm.at("image");
        const auto& wld = lm.at("world");
        s.landmarksImage.emplace_back(img[0].get<double>(), img[1].get<double>());
        s.landmarksWorld.emplace_back(wld[0].get<double>(), wld[1].get<double>(),
                                      wld[2].get<double>());
    }
    return s;
}

inline void write_slide(const std::string& pgmPath, const HistologySlide& s) {
    auto out = open_output(pgmPath);
    out << "P5\n" << s.width << ' ' << s.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(s.pixels.data()),
              static_cast<std::streamsize>(s.pixels.size()));

    json meta;
    meta["index"] = s.index;
    meta["pixel_spacing"] = {s.pixelSpacing.x(), s.pixelSpacing.y()};
    meta["landmarks"] = json::array();
    for (std::size_t i = 0; i < s.landmarksImage.size(); ++i)
        meta["landmarks"].push_back(
            {{"image", {s.landmarksImage[i].x(), s.landmarksImage[i].y()}},
             {"world",
              {s.landmarksWorld[i].x(), s.landmarksWorld[i].y(), s.landmarksWorld[i].z()}}});
    open_output(pgmPath + ".json") << meta.dump(2) << "\n";
}

// ------------------------------------------------------------- transforms

inline RigidTransform read_transform(const std::string& path) {
    auto in = open_input(path);
    RigidTransform t;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (!(in >> t.matrix(r, c)))
                throw ParseError(path + ": expected 16 numbers (4x4 row-major)");
    return t;
}

inline void write_transform(const std::string& path, const RigidTransform& t) {
    auto out = open_output(path);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c)
            out << format_double(t.matrix(r, c)) << (c == 3 ? "" : " ");
        out << "\n";
    }
}

// --------------------------------------------------------------- manifest

struct CaseManifest {
    std::string specimenId;
    std::string markups;          // curve/fiducial export
    std::string markupsVariantB;  // optional second spline placement
    std::string measurements;     // CSV table
    std::vector<std::string> slides;
    std::string volumeFixed, volumeMoving;
    std::vector<Point3> fiducialsFixed, fiducialsMoving;
    std::filesystem::path baseDir;

    std::string resolve(const std::string& p) const {
        if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
        return (baseDir / p).string();
    }
};

inline CaseManifest read_manifest(const std::string& path) {
    auto in = open_input(path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    CaseManifest m;
    m.baseDir = std::filesystem::path(path).parent_path();
    m.specimenId = doc.value("specimen_id", "");
    m.markups = doc.value("markups", "");
    m.markupsVariantB = doc.value("markups_variant_b", "");
    m.measurements = doc.value("measurements", "");
    for (const auto& s : doc.value("slides", json::array()))
        m.slides.push_back(s.get<std::string>());
    if (doc.contains("volumes")) {
        m.volumeFixed = doc["volumes"].value("fixed", "");
        m.volumeMoving = doc["volumes"].value("moving", "");
    }
    const auto readPoints = [](const json& arr) {
        std::vector<Point3> out;
        for (const auto& p : arr)
            out.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
        return out;
    };
    if (doc.contains("fiducials")) {
        m.fiducialsFixed = readPoints(doc["fiducials"].value("fixed", json::array()));
        m.fiducialsMoving = readPoints(doc["fiducials"].value("moving", json::array()));
    }

    for (const std::string& p :
         {m.markups, m.markupsVariantB, m.measurements, m.volumeFixed, m.volumeMoving})
        if (!p.empty() && !std::filesystem::exists(m.resolve(p)))
            throw ValidationError(path + ": referenced file missing: " + p);
    for (const auto& s : m.slides)
        if (!std::filesystem::exists(m.resolve(s)))
            throw ValidationError(path + ": referenced slide missing: " + s);
    return m;
}

inline void write_manifest(const std::string& path, const CaseManifest& m) {
    json doc;
    doc["specimen_id"] = m.specimenId;
    if (!m.markups.empty()) doc["markups"] = m.markups;
    if (!m.markupsVariantB.empty()) doc["markups_variant_b"] = m.markupsVariantB;
    if (!m.measurements.empty()) doc["measurements"] = m.measurements;
    if (!m.slides.empty()) doc["slides"] = m.slides;
    if (!m.volumeFixed.empty() || !m.volumeMoving.empty())
        doc["volumes"] = {{"fixed", m.volumeFixed}, {"moving", m.volumeMoving}};
    if (!m.fiducialsFixed.empty()) {
        json fids;
        fids["fixed"] = json::array();
        fids["moving"] = json::array();
        for (const auto& p : m.fiducialsFixed)
            fids["fixed"].push_back({p.x(), p.y(), p.z()});
        for (const auto& p : m.fiducialsMoving)
            fids["moving"].push_back({p.x(), p.y(), p.z()});
        doc["fiducials"] = std::move(fids);
    }
    open_output(path) << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------- reports

inline json plane_to_json(const DissectionPlane& p) {
    const auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
    return {{"index", p.index},        {"origin", vec(p.origin)},
            {"normal", vec(p.normal)}, {"u_axis", vec(p.uAxis)},
            {"v_axis", vec(p.vAxis)},  {"anchor_a", vec(p.anchorA)},
            {"anchor_b", vec(p.anchorB)}, {"param_a", p.paramA},
            {"param_b", p.paramB}};
}

inline DissectionPlane plane_from_json(const json& j) {
    const auto vec = [](const json& a) {
        return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    };
    DissectionPlane p;
    p.index = j.at("index").get<int>();
    p.origin = vec(j.at("origin"));
    p.normal = vec(j.at("normal"));
    p.uAxis = vec(j.at("u_axis"));
    p.vAxis = vec(j.at("v_axis"));
    p.anchorA = vec(j.at("anchor_a"));
    p.anchorB = vec(j.at("anchor_b"));
    p.paramA = j.at("param_a").get<double>();
    p.paramB = j.at("param_b").get<double>();
    return p;
}

inline json error_report_to_json(const ErrorReport& r) {
    json j;
    j["n"] = r.n;
    j["mean_mm"] = r.mean;
    j["stdev_mm"] = r.stdev;
    j["d1_d3"] = {{"n", r.d13.n}, {"mean_mm", r.d13.mean}, {"stdev_mm", r.d13.stdev}};
    j["d2"] = {{"n", r.d2.n}, {"mean_mm", r.d2.mean}, {"stdev_mm", r.d2.stdev}};
    if (r.shapiroW) j["shapiro_w"] = *r.shapiroW;
    j["excluded_curved"] = r.excludedCurved;
    return j;
}

inline json sensitivity_report_to_json(const SensitivityReport& r) {
    json j;
    j["rotations_deg"] = r.rotationsDeg;
    j["translations_mm"] = r.translationsMm;
    j["max_rotation_deg"] = r.maxRotationDeg;
    j["mean_translation_mm"] = r.meanTranslationMm;
    j["stdev_translation_mm"] = r.stdevTranslationMm;
    return j;
}

} // namespace histoloc::io

#endif
