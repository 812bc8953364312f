// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "promptmr/core/error.hpp"
#include "promptmr/core/rng.hpp"

namespace promptmr {

/// MR tissue properties of one label class.
struct TissueProperties {
    double t1_ms = 0;
    double t2_ms = 0;
    double t2star_ms = 0;
    double pd_au = 0;
};

/// Shared anatomy for a family of paired acquisitions: an integer label grid
/// plus per-class relaxation/density properties. All contrasts simulated from
/// one atlas are voxelwise aligned by construction.
struct TissueAtlas {
    std::array<std::size_t, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<std::uint16_t> labels; // x-fastest
    std::vector<TissueProperties> properties; // indexed by label
    int lesion_class = 0; // 0 = none
    std::uint64_t seed = 0;

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims[0] * (y + dims[1] * z);
    }
    std::uint16_t label_at(std::size_t x, std::size_t y, std::size_t z) const { return labels[index(x, y, z)]; }

    void validate() const {
        if (dims[0] < 8 || dims[1] < 8 || dims[2] < 8) throw data_error("TissueAtlas: dims must be >= 8 per axis");
        for (std::uint16_t l : labels)
            if (l >= properties.size()) throw data_error("TissueAtlas: label without property record");
        if (properties.empty() || properties[0].pd_au != 0.0)
            throw data_error("TissueAtlas: background class 0 must have pd_au = 0");
        for (std::size_t c = 0; c < properties.size(); ++c) {
            const TissueProperties& p = properties[c];
            if (p.t1_ms <= 0 || p.t2_ms <= 0 || p.t2star_ms <= 0)
                throw data_error("TissueAtlas: relaxation times must be positive");
            if (c > 0 && p.pd_au <= 0) throw data_error("TissueAtlas: tissue classes need pd_au > 0");
        }
    }
};

namespace detail {

/// Smooth low-frequency scalar field in [-1,1], deterministic per rng stream.
struct WobbleField {
    struct Mode {
        double fx, fy, fz, px, py, pz, amp;
    };
    std::vector<Mode> modes;

    static WobbleField make(Rng& rng, int n_modes, double amplitude) {
        WobbleField f;
        for (int i = 0; i < n_modes; ++i) {
            Mode m;
            m.fx = rng.uniform(1.0, 3.0);
            m.fy = rng.uniform(1.0, 3.0);
            m.fz = rng.uniform(1.0, 3.0);
            m.px = rng.uniform(0.0, 6.283185307179586);
            m.py = rng.uniform(0.0, 6.283185307179586);
            m.pz = rng.uniform(0.0, 6.283185307179586);
            m.amp = amplitude / static_cast<double>(n_modes);
            f.modes.push_back(m);
        }
        return f;
    }

    /// u,v,w in [0,1].
    double operator()(double u, double v, double w) const {
        double s = 0;
        for (const Mode& m : modes)
            s += m.amp * std::sin(m.fx * u * 6.283185307179586 + m.px) *
                 std::sin(m.fy * v * 6.283185307179586 + m.py) *
                 std::sin(m.fz * w * 6.283185307179586 + m.pz);
        return s;
    }
};

} // namespace detail

/// Builds a brain-like phantom: a wobbled ellipsoid shell structure with
/// n_classes tissue classes inside (classes 1..n_classes-1 are nested shells,
/// class n_classes is a compact lesion blob), background 0 outside. Property
/// values follow plausible relaxation-time curves with a per-seed jitter so
/// atlases from different seeds produce visibly different image statistics.
inline TissueAtlas generate_atlas(std::uint64_t seed, std::array<std::size_t, 3> size, int n_classes,
                                  std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0}) {
    if (size[0] < 8 || size[1] < 8 || size[2] < 8)
        throw data_error("generate_atlas: size must be >= 8 per axis");
    if (n_classes < 3) throw data_error("generate_atlas: n_classes must be >= 3");

    Rng root(seed);
    Rng geo = root.fork("atlas-geometry");
    Rng prop = root.fork("atlas-properties");

    TissueAtlas atlas;
    atlas.dims = size;
    atlas.spacing_mm = spacing_mm;
    atlas.seed = seed;
    atlas.labels.assign(size[0] * size[1] * size[2], 0);
    atlas.lesion_class = n_classes;

    // Ellipsoid center and semi-axes in normalized [0,1] coordinates.
    std::array<double, 3> center{}, semi{};
    for (int i = 0; i < 3; ++i) {
        center[static_cast<std::size_t>(i)] = 0.5 + geo.uniform(-0.03, 0.03);
        semi[static_cast<std::size_t>(i)] = 0.40 + geo.uniform(-0.04, 0.04);
    }
    detail::WobbleField wobble = detail::WobbleField::make(geo, 3, 0.10);

    // Lesion blob strictly inside the deep half of the ellipsoid.
    std::array<double, 3> lesion_c{};
    for (int i = 0; i < 3; ++i)
        lesion_c[static_cast<std::size_t>(i)] =
            center[static_cast<std::size_t>(i)] + geo.uniform(-0.3, 0.3) * semi[static_cast<std::size_t>(i)] * 0.5;
    const double lesion_r = 0.10 + geo.uniform(0.0, 0.04); // normalized units

    const int n_shells = n_classes - 1;
    for (std::size_t z = 0; z < size[2]; ++z)
        for (std::size_t y = 0; y < size[1]; ++y)
            for (std::size_t x = 0; x < size[0]; ++x) {
                const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size[0]);
                const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size[1]);
                const double w = (static_cast<double>(z) + 0.5) / static_cast<double>(size[2]);
                const double dx = (u - center[0]) / semi[0];
                const double dy = (v - center[1]) / semi[1];
                const double dz = (w - center[2]) / semi[2];
                double rho = std::sqrt(dx * dx + dy * dy + dz * dz) + wobble(u, v, w);
                if (rho >= 1.0) continue; // background
                int shell = static_cast<int>(rho * static_cast<double>(n_shells));
                shell = std::min(shell, n_shells - 1);
                std::uint16_t lab = static_cast<std::uint16_t>(1 + shell);
                const double lx = (u - lesion_c[0]) / lesion_r;
                const double ly = (v - lesion_c[1]) / lesion_r;
                const double lz = (w - lesion_c[2]) / lesion_r;
                if (lx * lx + ly * ly + lz * lz < 1.0) lab = static_cast<std::uint16_t>(n_classes);
                atlas.labels[atlas.index(x, y, z)] = lab;
            }

    // Property curves: inner shells are deep-tissue-like, outer shells trend
    // toward fluid; values jittered +-5% per seed.
    atlas.properties.resize(static_cast<std::size_t>(n_classes) + 1);
    atlas.properties[0] = TissueProperties{1000.0, 100.0, 50.0, 0.0};
    auto jitter = [&prop](double v) { return v * (1.0 + prop.uniform(-0.05, 0.05)); };
    for (int s = 0; s < n_shells; ++s) {
        const double t = n_shells > 1 ? static_cast<double>(s) / static_cast<double>(n_shells - 1) : 0.0;
        TissueProperties p;
        p.t1_ms = jitter(800.0 + t * 2700.0);   // WM-like -> CSF-like
        p.t2_ms = jitter(70.0 + t * 1700.0);
        p.t2star_ms = jitter(45.0 + t * 400.0);
        p.pd_au = jitter(0.68 + t * 0.32);
        atlas.properties[static_cast<std::size_t>(1 + s)] = p;
    }
    atlas.properties[static_cast<std::size_t>(n_classes)] =
        TissueProperties{jitter(1400.0), jitter(250.0), jitter(90.0), jitter(0.9)};

    // Every class must occur inside the mask.
    std::vector<std::size_t> freq(atlas.properties.size(), 0);
    for (std::uint16_t l : atlas.labels) ++freq[l];
    for (std::size_t c = 1; c < freq.size(); ++c)
        if (freq[c] == 0) throw data_error("generate_atlas: empty tissue class " + std::to_string(c));

    atlas.validate();
    return atlas;
}

/// Binary brain mask (label != 0).
inline std::vector<bool> brain_mask(const TissueAtlas& a) {
    std::vector<bool> m(a.labels.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = a.labels[i] != 0;
    return m;
}

} // namespace promptmr
