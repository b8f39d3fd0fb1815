#include "surcol/fluids.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include "surcol/csv.hpp"
#include "surcol/parallel.hpp"
#include "surcol/rng.hpp"
#include "surcol/vlecheck.hpp"

namespace surcol {

const std::array<const char*, kModelfluidFeatureCount> kModelfluidFeatureNames = {
    "p_Pa", "tsv1_K", "tsv2_K", "tsv3_K", "dhv1_J_mol", "dhv2_J_mol", "dhv3_J_mol",
    "g12",  "g21",    "g13",    "g31",    "g23",        "g32",        "d13",
    "d21",  "d31"};

std::array<double, kModelfluidFeatureCount> feature_vector(const ModelfluidFeatures& f) {
    std::array<double, kModelfluidFeatureCount> v;
    v[0] = f.pressure;
    for (int i = 0; i < 3; ++i) v[1 + i] = f.t_sat[i];
    for (int i = 0; i < 3; ++i) v[4 + i] = f.dh_vap[i];
    for (int i = 0; i < 6; ++i) v[7 + i] = f.gamma_inf[i];
    for (int i = 0; i < 3; ++i) v[13 + i] = f.dydx_inf[i];
    return v;
}

ModelfluidFeatures features_from_vector(const std::array<double, kModelfluidFeatureCount>& v) {
    ModelfluidFeatures f;
    f.pressure = v[0];
    for (int i = 0; i < 3; ++i) f.t_sat[i] = v[1 + i];
    for (int i = 0; i < 3; ++i) f.dh_vap[i] = v[4 + i];
    for (int i = 0; i < 6; ++i) f.gamma_inf[i] = v[7 + i];
    for (int i = 0; i < 3; ++i) f.dydx_inf[i] = v[13 + i];
    return f;
}

FluidLibrary read_fluid_library(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    if (t.header.size() != 1 + kModelfluidFeatureCount || t.header[0] != "id")
        throw DataError("fluid library: unexpected header in " + path);
    for (int i = 0; i < kModelfluidFeatureCount; ++i)
        if (t.header[1 + i] != kModelfluidFeatureNames[i])
            throw DataError("fluid library: unexpected column '" + t.header[1 + i] + "' in " +
                            path);
    FluidLibrary lib;
    lib.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        Fluid f;
        f.id = row[0];
        if (f.id.empty()) throw DataError("fluid library: empty id in " + path);
        std::array<double, kModelfluidFeatureCount> v;
        for (int i = 0; i < kModelfluidFeatureCount; ++i) v[i] = csv::to_double(row[1 + i]);
        f.features = features_from_vector(v);
        lib.push_back(std::move(f));
    }
    return lib;
}

void write_fluid_library(const std::string& path, const FluidLibrary& lib) {
    std::vector<std::string> header = {"id"};
    for (const char* n : kModelfluidFeatureNames) header.emplace_back(n);
    csv::Writer out(path, header);
    std::vector<std::string> fields(header.size());
    for (const Fluid& f : lib) {
        fields[0] = f.id;
        const auto v = feature_vector(f.features);
        for (int i = 0; i < kModelfluidFeatureCount; ++i) fields[1 + i] = csv::fmt(v[i]);
        out.row(fields);
    }
}

namespace {

ModelfluidParameters draw_parameters(Rng& rng, const SynthesisBounds& b) {
    Vec3 t;
    for (;;) {
        for (double& v : t) v = rng.uniform(b.t_lo, b.t_hi);
        if (std::abs(t[0] - t[1]) >= b.t_min_sep && std::abs(t[0] - t[2]) >= b.t_min_sep &&
            std::abs(t[1] - t[2]) >= b.t_min_sep)
            break;
    }
    ModelfluidParameters p;
    p.pressure = b.pressure;
    for (int i = 0; i < 3; ++i) {
        p.dh_vap[i] = rng.uniform(b.dh_lo, b.dh_hi);
        p.antoine[i].b = p.dh_vap[i] / kGasConstant;
        p.antoine[i].a = std::log(b.pressure / kPRef) + p.antoine[i].b / t[i];
    }
    for (double& m : p.margules) m = rng.uniform(b.margules_lo, b.margules_hi);
    return p;
}

void validate(const SynthesisBounds& b) {
    if (!(b.t_lo > 0.0 && b.t_lo < b.t_hi)) throw InvalidSpec("synthesis: bad temperature range");
    if (!(b.t_min_sep >= kTEps)) throw InvalidSpec("synthesis: separation below anchor minimum");
    if (!(b.dh_lo > 0.0 && b.dh_lo < b.dh_hi)) throw InvalidSpec("synthesis: bad enthalpy range");
    if (!(b.margules_lo <= b.margules_hi)) throw InvalidSpec("synthesis: bad margules range");
    if (!(b.pressure > 0.0)) throw InvalidSpec("synthesis: bad pressure");
}

}  // namespace

FluidLibrary synthesize_fluids(int count, std::uint64_t seed, const SynthesisBounds& bounds,
                               unsigned workers, long max_attempts) {
    validate(bounds);
    if (count <= 0) throw InvalidSpec("synthesis: count must be positive");
    if (max_attempts <= 0) max_attempts = 400L * count;

    const CheckConfig cfg;
    FluidLibrary lib;
    lib.reserve(count);
    long attempt = 0;
    const long batch = 64;
    std::vector<std::optional<ModelfluidFeatures>> slot(batch);
    while (static_cast<int>(lib.size()) < count && attempt < max_attempts) {
        const long n = std::min(batch, max_attempts - attempt);
        parallel_for(
            static_cast<std::size_t>(n),
            [&](std::size_t k) {
                Rng rng(Rng::substream(seed, "fluid-attempt-" + std::to_string(attempt + (long)k)));
                const ModelfluidParameters p = draw_parameters(rng, bounds);
                slot[k] = check_ternary_system(p, cfg).pass
                              ? std::optional<ModelfluidFeatures>(parameters_to_features(p))
                              : std::nullopt;
            },
            workers);
        for (long k = 0; k < n && static_cast<int>(lib.size()) < count; ++k) {
            if (!slot[k]) continue;
            char id[16];
            std::snprintf(id, sizeof id, "F%04d", static_cast<int>(lib.size()) + 1);
            lib.push_back({id, *slot[k]});
        }
        attempt += n;
    }
    if (static_cast<int>(lib.size()) < count)
        throw TooFewSamples("fluid synthesis: found " + std::to_string(lib.size()) + " of " +
                            std::to_string(count) + " within " + std::to_string(max_attempts) +
                            " attempts");
    return lib;
}

}  // namespace surcol
