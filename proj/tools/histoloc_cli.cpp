// Command-line pipeline driver: fit-curves, assign-planes, place-histology,
// fuse, validate, sensitivity, synth.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "histoloc/histoloc.hpp"

namespace fs = std::filesystem;
using namespace histoloc;
using histoloc::io::json;

namespace {

struct CurveSet {
    ParametricCubic a, b;
    std::optional<ParametricCubic> edge;
    FiducialReference fRef;
};

// Curve roles by markup order: first = edge a, second = edge b, optional
// third = outer contour used for d2. The first fiducial is f_ref.
CurveSet load_curves(const io::CaseManifest& manifest, const std::string& markupPath) {
    const io::MarkupSet set = io::read_markups(manifest.resolve(markupPath));
    if (set.curves.size() < 2)
        throw ValidationError("markup file needs at least two curves (edges a and b)");
    if (set.fiducials.empty())
        throw ValidationError("markup file needs a fiducial reference point");
    CurveSet out;
    out.a = fit_parametric_cubic(set.curves[0]);
    out.b = fit_parametric_cubic(set.curves[1]);
    if (set.curves.size() >= 3) out.edge = fit_parametric_cubic(set.curves[2]);
    out.fRef = set.fiducials[0];
    return out;
}

std::vector<DissectionMeasurement> load_measurements(const io::CaseManifest& manifest,
                                                     double extraOffset) {
    if (manifest.measurements.empty())
        throw ValidationError("manifest has no measurements table");
    auto ms = io::read_measurements(manifest.resolve(manifest.measurements));
    for (auto& m : ms) m.offset += extraOffset;
    return ms;
}

json assignment_to_json(const std::vector<PlaneAssignmentResult>& results) {
    json out = json::array();
    for (const auto& r : results) {
        json item;
        if (r.plane) {
            item["plane"] = io::plane_to_json(*r.plane);
            item["residual_a_mm"] = r.solutionA.residual;
            item["residual_b_mm"] = r.solutionB.residual;
            item["method_a"] =
                r.solutionA.method == RootMethod::Newton ? "newton" : "bisection-fallback";
            item["method_b"] =
                r.solutionB.method == RootMethod::Newton ? "newton" : "bisection-fallback";
            item["brackets_a"] = r.solutionA.bracketCount;
            item["brackets_b"] = r.solutionB.bracketCount;
        } else {
            item["error"] = r.error;
        }
        out.push_back(std::move(item));
    }
    return out;
}

std::vector<DissectionPlane> planes_only(const std::vector<PlaneAssignmentResult>& results) {
    std::vector<DissectionPlane> planes;
    for (const auto& r : results) {
        if (!r.plane) throw NumericalError(r.error);
        planes.push_back(*r.plane);
    }
    return planes;
}

std::vector<ValidationRecord>
build_records(const std::vector<PairEstimates>& estimates,
              const std::vector<DissectionMeasurement>& ms) {
    std::vector<ValidationRecord> records;
    for (const auto& e : estimates) {
        ValidationRecord rec;
        rec.dissectionIndex = e.indexFrom;
        rec.d1Est = e.d1;
        rec.d2Est = e.d2;
        rec.d3Est = e.d3;
        for (const auto& m : ms) {
            if (m.index == e.indexFrom) {
                rec.d1Phy = m.d1Phy;
                rec.d2Phy = m.d2Phy;
                rec.d3Phy = m.d3Phy;
                rec.curvedCut = rec.curvedCut || m.curvedCut;
            }
            if (m.index == e.indexTo) rec.curvedCut = rec.curvedCut || m.curvedCut;
        }
        records.push_back(rec);
    }
    return records;
}

void write_json(const fs::path& path, const json& doc) {
    io::open_output(path.string()) << doc.dump(2) << "\n";
}

std::string shape_name(SpecimenShape s) {
    switch (s) {
        case SpecimenShape::ParallelLines: return "parallel-lines";
        case SpecimenShape::HalfCylinder: return "half-cylinder";
        case SpecimenShape::BentPrism: return "bent-prism";
    }
    return "?";
}

int run(int argc, char** argv) {
    CLI::App app{"Nonparallel histology plane assignment and CT fusion pipeline"};
    app.require_subcommand(1);

    std::string manifestPath, outDir = ".", planesPath;
    double offsetMm = 0.0, thresholdHU = 226.0, trimFraction = 0.1, noiseSigma = 0.0;
    bool excludeCurved = false, withRotation = false, withPhantom = false;
    std::uint64_t seed = 0;
    int cuts = 6;
    std::string shapeStr = "half-cylinder";

    const auto addCommon = [&](CLI::App* sub, bool needsManifest = true) {
        if (needsManifest)
            sub->add_option("--manifest", manifestPath, "case manifest JSON")->required();
        sub->add_option("--out", outDir, "output directory");
    };

    auto* fitCurves = app.add_subcommand("fit-curves", "fit cubic splines to markups");
    addCommon(fitCurves);

    auto* assignPlanes =
        app.add_subcommand("assign-planes", "solve dissection planes from measurements");
    addCommon(assignPlanes);
    assignPlanes->add_option("--offset-mm", offsetMm,
                             "extra signed plane offset added to each measurement");

    auto* placeHistology =
        app.add_subcommand("place-histology", "pose slides on assigned planes");
    addCommon(placeHistology);
    placeHistology->add_option("--planes", planesPath,
                               "planes JSON from assign-planes (default <out>/planes.json)");
    placeHistology->add_flag("--with-rotation", withRotation,
                             "also fit a rotation-enabled in-plane Procrustes (diagnostic)");

    auto* fuse = app.add_subcommand("fuse", "register and stitch the two bisection CTs");
    addCommon(fuse);
    fuse->add_option("--threshold-hu", thresholdHU, "bone threshold (default 226)");
    fuse->add_option("--trim-fraction", trimFraction, "ICP trim fraction (default 0.1)");

    auto* validate =
        app.add_subcommand("validate", "compare estimated vs physical dissection sizes");
    addCommon(validate);
    validate->add_flag("--exclude-curved", excludeCurved,
                       "exclude dissections flagged as curved");

    auto* sensitivity =
        app.add_subcommand("sensitivity", "compare plane assignment between spline variants");
    addCommon(sensitivity);

    auto* synth = app.add_subcommand("synth", "generate a synthetic ground-truth case");
    addCommon(synth, false);
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--cuts", cuts, "number of dissection cuts");
    synth->add_option("--noise-sigma", noiseSigma, "measurement noise sigma (mm)");
    synth->add_option("--shape", shapeStr,
                      "parallel-lines | half-cylinder | bent-prism");
    synth->add_flag("--with-phantom", withPhantom, "also render phantom CT halves");

    CLI11_PARSE(app, argc, argv);
    fs::create_directories(outDir);
    const fs::path out(outDir);

    if (fitCurves->parsed()) {
        const io::CaseManifest manifest = io::read_manifest(manifestPath);
        const io::MarkupSet set = io::read_markups(manifest.resolve(manifest.markups));
        json doc;
        doc["curves"] = json::array();
        for (const auto& curve : set.curves) {
            const ParametricCubic cubic = fit_parametric_cubic(curve);
            json c;
            c["label"] = curve.label;
            c["residual_rms_mm"] = cubic.residualRms;
            c["chord_params"] = cubic.chordParams;
            c["coefficients"] = json::array();
            for (int axis = 0; axis < 3; ++axis)
                c["coefficients"].push_back({cubic.coefficients(axis, 0),
                                             cubic.coefficients(axis, 1),
                                             cubic.coefficients(axis, 2),
                                             cubic.coefficients(axis, 3)});
            doc["curves"].push_back(std::move(c));
        }
        write_json(out / "curves.json", doc);
        std::cout << "fitted " << set.curves.size() << " curves -> "
                  << (out / "curves.json").string() << "\n";
    } else if (assignPlanes->parsed()) {
        const io::CaseManifest manifest = io::read_manifest(manifestPath);
        const CurveSet curves = load_curves(manifest, manifest.markups);
        const auto ms = load_measurements(manifest, offsetMm);
        const auto results = assign_all_planes(curves.a, curves.b, curves.fRef, ms);
        json doc;
        doc["specimen_id"] = manifest.specimenId;
        doc["planes"] = assignment_to_json(results);
        write_json(out / "planes.json", doc);
        int solved = 0;
        for (const auto& r : results)
            if (r.plane) {
                io::write_transform(
                    (out / ("plane_" + std::to_string(r.plane->index) + "_pose.txt"))
                        .string(),
                    plane_pose(*r.plane));
                ++solved;
            }
        std::cout << "assigned " << solved << "/" << results.size() << " planes -> "
                  << (out / "planes.json").string() << "\n";
        if (solved < static_cast<int>(results.size())) return 2;
    } else if (placeHistology->parsed()) {
        const io::CaseManifest manifest = io::read_manifest(manifestPath);
        if (planesPath.empty()) planesPath = (out / "planes.json").string();
        json planesDoc;
        io::open_input(planesPath) >> planesDoc;
        std::vector<DissectionPlane> planes;
        for (const auto& item : planesDoc.at("planes"))
            if (item.contains("plane")) planes.push_back(io::plane_from_json(item["plane"]));

        json doc;
        doc["slides"] = json::array();
        for (const auto& slidePath : manifest.slides) {
            const HistologySlide slide = io::read_slide(manifest.resolve(slidePath));
            const auto planeIt =
                std::find_if(planes.begin(), planes.end(),
                             [&](const auto& p) { return p.index == slide.index; });
            if (planeIt == planes.end())
                throw ValidationError("no assigned plane for slide index " +
                                      std::to_string(slide.index));
            const PlacedSlide placed = place_slide(slide, *planeIt);
            json s;
            s["index"] = slide.index;
            s["scale"] = placed.inPlane.scale;
            s["translation_mm"] = {placed.inPlane.translation.x(),
                                   placed.inPlane.translation.y()};
            s["landmark_rms_mm"] = placed.inPlane.residualRms;
            if (withRotation) {
                std::vector<Vec2> imageMm, planeCoords;
                for (std::size_t i = 0; i < slide.landmarksImage.size(); ++i) {
                    imageMm.emplace_back(slide.landmarksImage[i].x() * slide.pixelSpacing.x(),
                                         slide.landmarksImage[i].y() * slide.pixelSpacing.y());
                    const Vec3 rel = slide.landmarksWorld[i] - planeIt->origin;
                    planeCoords.emplace_back(rel.dot(planeIt->uAxis), rel.dot(planeIt->vAxis));
                }
                const auto proc = fit_inplane_procrustes(imageMm, planeCoords);
                s["procrustes"] = {{"scale", proc.scale},
                                   {"angle_deg", proc.angle * 180.0 / M_PI},
                                   {"residual_rms_mm", proc.residualRms}};
            }
            RigidTransform composed;
            composed.matrix = placed.composed;
            io::write_transform(
                (out / ("slide_" + std::to_string(slide.index) + "_to_world.txt")).string(),
                composed);
            doc["slides"].push_back(std::move(s));
        }
        write_json(out / "placement.json", doc);
        std::cout << "placed " << manifest.slides.size() << " slides -> "
                  << (out / "placement.json").string() << "\n";
    } else if (fuse->parsed()) {
        const io::CaseManifest manifest = io::read_manifest(manifestPath);
        if (manifest.volumeFixed.empty() || manifest.volumeMoving.empty())
            throw ValidationError("manifest needs volumes.fixed and volumes.moving");
        const VolumeGrid fixed = io::read_volume(manifest.resolve(manifest.volumeFixed));
        const VolumeGrid moving = io::read_volume(manifest.resolve(manifest.volumeMoving));

        const FiducialRegistration init =
            fiducial_register(manifest.fiducialsMoving, manifest.fiducialsFixed);
        const PointCloud fixedSurface =
            mask_surface_points(threshold_segment(fixed, thresholdHU));
        const PointCloud movingSurface =
            mask_surface_points(threshold_segment(moving, thresholdHU));
        const IcpResult icp =
            icp_refine(movingSurface, fixedSurface, init.transform, trimFraction);
        const StitchResult stitched = stitch_volumes(fixed, moving, icp.transform);

        io::write_transform((out / "t_fuse.txt").string(), icp.transform);
        io::write_volume((out / "fused.nrrd").string(), stitched.volume);
        json doc;
        doc["fiducial_fre_mm"] = init.fre;
        doc["icp_initial_rms_mm"] = icp.initialRms;
        doc["icp_final_rms_mm"] = icp.finalRms;
        doc["icp_iterations"] = icp.iterations;
        doc["overlap_voxels"] = stitched.overlapVoxels;
        doc["empty_overlap_warning"] = stitched.emptyOverlapWarning;
        write_json(out / "fusion.json", doc);
        if (stitched.emptyOverlapWarning)
            std::cerr << "warning: no overlap between fixed and resampled moving volume\n";
        std::cout << "fused volume -> " << (out / "fused.nrrd").string()
                  << " (ICP RMS " << icp.finalRms << " mm)\n";
    } else if (validate->parsed()) {
        const io::CaseManifest manifest = io::read_manifest(manifestPath);
        const CurveSet curves = load_curves(manifest, manifest.markups);
        const auto ms = load_measurements(manifest, 0.0);
        const auto planes = planes_only(assign_all_planes(curves.a, curves.b, curves.fRef, ms));
        const auto estimates = compute_estimates(planes, curves.a, curves.b,
                                                 curves.edge ? &*curves.edge : nullptr);
        const auto records = build_records(estimates, ms);
        const ErrorReport report = error_report(records, excludeCurved);
        json doc;
        doc["report"] = io::error_report_to_json(report);
        doc["pairs"] = json::array();
        for (const auto& e : estimates) {
            json p = {{"from", e.indexFrom}, {"to", e.indexTo},
                      {"d1_est_mm", e.d1},   {"d3_est_mm", e.d3}};
            if (e.d2) p["d2_est_mm"] = *e.d2;
            doc["pairs"].push_back(std::move(p));
        }
        write_json(out / "validation.json", doc);
        std::cout << "n=" << report.n << " mean=" << report.mean
                  << " mm stdev=" << report.stdev << " mm";
        if (report.shapiroW) std::cout << " W=" << *report.shapiroW;
        std::cout << " -> " << (out / "validation.json").string() << "\n";
    } else if (sensitivity->parsed()) {
        const io::CaseManifest manifest = io::read_manifest(manifestPath);
        if (manifest.markupsVariantB.empty())
            throw ValidationError("manifest needs markups_variant_b for sensitivity");
        const CurveSet a = load_curves(manifest, manifest.markups);
        const CurveSet b = load_curves(manifest, manifest.markupsVariantB);
        const auto ms = load_measurements(manifest, 0.0);
        const SplineVariant va{a.a, a.b, a.edge};
        const SplineVariant vb{b.a, b.b, b.edge};
        const SensitivityReport report = sensitivity_analysis(va, vb, a.fRef, ms);
        write_json(out / "sensitivity.json", io::sensitivity_report_to_json(report));
        std::cout << "max rotation " << report.maxRotationDeg << " deg, mean translation "
                  << report.meanTranslationMm << " mm -> "
                  << (out / "sensitivity.json").string() << "\n";
    } else if (synth->parsed()) {
        SpecimenParams params;
        params.seed = seed;
        params.cuts = cuts;
        params.noiseSigma = noiseSigma;
        if (shapeStr == "parallel-lines")
            params.shape = SpecimenShape::ParallelLines;
        else if (shapeStr == "half-cylinder")
            params.shape = SpecimenShape::HalfCylinder;
        else if (shapeStr == "bent-prism")
            params.shape = SpecimenShape::BentPrism;
        else
            throw ValidationError("unknown shape: " + shapeStr);

        const SyntheticSpecimen spec = generate(params);
        io::MarkupSet markups;
        markups.curves = {spec.markupA, spec.markupB, spec.markupEdge};
        markups.fiducials = {spec.fRef};
        io::write_markups((out / "markups.json").string(), markups);

        // jittered second placement of the same splines, for sensitivity
        std::mt19937_64 jitterRng(seed + 1);
        std::normal_distribution<double> jitter(0.0, 0.1);
        io::MarkupSet markupsB = markups;
        for (auto& curve : markupsB.curves)
            for (auto& p : curve.points)
                p += Vec3(jitter(jitterRng), jitter(jitterRng), jitter(jitterRng));
        io::write_markups((out / "markups_b.json").string(), markupsB);

        // truth slab sizes as stand-in caliper values on the pair's first row
        auto ms = spec.measurements;
        const auto truthEstimates =
            compute_estimates(spec.truthPlanes, spec.curveA, spec.curveB, &spec.curveEdge);
        for (const auto& e : truthEstimates)
            for (auto& m : ms)
                if (m.index == e.indexFrom) {
                    m.d1Phy = e.d1;
                    m.d2Phy = e.d2;
                    m.d3Phy = e.d3;
                }
        io::write_measurements((out / "measurements.csv").string(), ms);

        io::CaseManifest manifest;
        manifest.specimenId = "synthetic-" + shape_name(params.shape) + "-seed" +
                              std::to_string(seed);
        manifest.markups = "markups.json";
        manifest.markupsVariantB = "markups_b.json";
        manifest.measurements = "measurements.csv";

        json truth;
        truth["planes"] = json::array();
        for (const auto& p : spec.truthPlanes) truth["planes"].push_back(io::plane_to_json(p));
        truth["true_d_a_mm"] = spec.trueDA;
        truth["true_d_b_mm"] = spec.trueDB;
        write_json(out / "truth.json", truth);

        // slides rendered from the truth placement, one per cut
        for (const auto& plane : spec.truthPlanes) {
            const RenderedSlide rendered =
                render_slide(plane, 30.0, 0.5, 1.0, seed + plane.index);
            const std::string name = "slide_" + std::to_string(plane.index) + ".pgm";
            io::write_slide((out / name).string(), rendered.slide);
            manifest.slides.push_back(name);
        }

        if (withPhantom) {
            PhantomParams pp;
            pp.seed = seed;
            const PhantomPair phantom = render_phantom(pp);
            io::write_volume((out / "ct_fixed.nrrd").string(), phantom.fixed);
            io::write_volume((out / "ct_moving.nrrd").string(), phantom.moving);
            io::write_volume((out / "ct_full.nrrd").string(), phantom.full);
            io::write_transform((out / "t_fuse_truth.txt").string(), phantom.tFuseTruth);
            manifest.volumeFixed = "ct_fixed.nrrd";
            manifest.volumeMoving = "ct_moving.nrrd";
            manifest.fiducialsFixed = phantom.fiducialsFixed;
            manifest.fiducialsMoving = phantom.fiducialsMoving;
        }
        io::write_manifest((out / "manifest.json").string(), manifest);
        std::cout << "synthetic case (" << shape_name(params.shape) << ", " << cuts
                  << " cuts) -> " << (out / "manifest.json").string() << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "{\"category\":\"validation\",\"error\":\"" << e.what() << "\"}\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "{\"category\":\"numerical\",\"error\":\"" << e.what() << "\"}\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "{\"category\":\"validation\",\"error\":\"" << e.what() << "\"}\n";
        return 1;
    }
}
