// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "promptmr/core/rng.hpp"
#include "promptmr/phantom/atlas.hpp"
#include "promptmr/phantom/sequence.hpp"
#include "promptmr/phantom/volume.hpp"

namespace promptmr {

namespace signal {

/// Spin echo: S = PD (1 - e^(-TR/T1)) e^(-TE/T2).
inline double spin_echo(double pd, double t1, double t2, double tr, double te) {
    return pd * (1.0 - std::exp(-tr / t1)) * std::exp(-te / t2);
}

/// Inversion recovery: S = PD |1 - 2 e^(-TI/T1) + e^(-TR/T1)| e^(-TE/T2).
inline double inversion_recovery(double pd, double t1, double t2, double tr, double te, double ti) {
    return pd * std::abs(1.0 - 2.0 * std::exp(-ti / t1) + std::exp(-tr / t1)) * std::exp(-te / t2);
}

/// Spoiled gradient echo: S = PD sin(FA) (1-E1)/(1 - cos(FA) E1) e^(-TE/T2*), E1 = e^(-TR/T1).
inline double spoiled_gradient_echo(double pd, double t1, double t2star, double tr, double te, double fa_rad) {
    const double e1 = std::exp(-tr / t1);
    return pd * std::sin(fa_rad) * (1.0 - e1) / (1.0 - std::cos(fa_rad) * e1) * std::exp(-te / t2star);
}

/// PD enhancement applied to the lesion class under contrast agent (T1CE).
constexpr double kContrastEnhancement = 1.8;

/// Noiseless signal of one tissue class under the given sequence.
inline double tissue_signal(const TissueProperties& p, const SequenceParams& sp, bool is_lesion) {
    double pd = p.pd_au;
    if (sp.modality == Modality::T1CE && is_lesion) pd *= kContrastEnhancement;
    const double fa_rad = sp.fa_deg * 3.14159265358979323846 / 180.0;
    switch (sp.modality) {
    case Modality::T1w:
    case Modality::T2w:
    case Modality::PD:
    case Modality::T1CE:
        return spin_echo(pd, p.t1_ms, p.t2_ms, sp.tr_ms, sp.te_ms);
    case Modality::FLAIR:
        return inversion_recovery(pd, p.t1_ms, p.t2_ms, sp.tr_ms, sp.te_ms, *sp.ti_ms);
    case Modality::SWI:
    case Modality::T2star:
        return spoiled_gradient_echo(pd, p.t1_ms, p.t2star_ms, sp.tr_ms, sp.te_ms, fa_rad);
    }
    return 0.0;
}

} // namespace signal

/// Simulates one acquisition from the atlas: per-class signal equations on the
/// atlas grid, resampling to the requested voxel size over the same physical
/// extent, then seeded additive Gaussian noise. Pure function of (inputs, seed).
inline Volume simulate_acquisition(const TissueAtlas& atlas, const SequenceParams& params,
                                   double noise_sigma, std::uint64_t seed) {
    atlas.validate();
    params.validate();
    if (noise_sigma < 0) throw data_error("simulate_acquisition: noise_sigma must be nonnegative");

    // Per-class lookup, then paint.
    std::vector<double> lut(atlas.properties.size());
    for (std::size_t c = 0; c < lut.size(); ++c)
        lut[c] = signal::tissue_signal(atlas.properties[c], params,
                                       static_cast<int>(c) == atlas.lesion_class && atlas.lesion_class != 0);

    Volume native(atlas.dims, atlas.spacing_mm);
    for (std::size_t i = 0; i < atlas.labels.size(); ++i) native.voxels[i] = lut[atlas.labels[i]];

    // Resample onto the requested voxel grid (identity when spacing matches).
    Volume out;
    if (params.voxel_mm == atlas.spacing_mm) {
        out = std::move(native);
    } else {
        std::array<std::size_t, 3> out_dims;
        for (int i = 0; i < 3; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            const double extent = static_cast<double>(atlas.dims[k]) * atlas.spacing_mm[k];
            out_dims[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(extent / params.voxel_mm[k])));
        }
        out = resample(native, out_dims, params.voxel_mm);
    }

    if (noise_sigma > 0) {
        Rng noise = Rng(seed).fork("acq-noise");
        for (double& v : out.voxels) v += noise.normal(0.0, noise_sigma);
    }
    return out;
}

/// Heterogeneous-input simulation: per-axis Gaussian blur with
/// sigma = fwhm / (2 sqrt(2 ln 2)) in voxel units, then subsampling by the
/// given factors (nearest-integer output dims, cell-centered resampling).
/// Output spacing is the input spacing scaled by the factors.
inline Volume degrade(const Volume& volume, std::array<double, 3> factors, std::array<double, 3> fwhm) {
    for (double f : factors)
        if (!(f >= 1.0 && f <= 3.0)) throw data_error("degrade: downsampling factor outside [1,3]");
    for (double w : fwhm)
        if (!(w >= 0.0 && w <= 3.0)) throw data_error("degrade: FWHM outside [0,3]");

    constexpr double kFwhmToSigma = 0.42466090014400952; // 1 / (2 sqrt(2 ln 2))
    std::array<double, 3> sigma{};
    for (int i = 0; i < 3; ++i) sigma[static_cast<std::size_t>(i)] = fwhm[static_cast<std::size_t>(i)] * kFwhmToSigma;
    Volume blurred = gaussian_blur(volume, sigma);

    std::array<std::size_t, 3> out_dims;
    std::array<double, 3> out_spacing;
    bool identity = true;
    for (int i = 0; i < 3; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out_dims[k] = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(volume.dims[k]) / factors[k])));
        out_spacing[k] = volume.spacing_mm[k] * factors[k];
        identity = identity && factors[k] == 1.0;
    }
    if (identity) {
        blurred.spacing_mm = out_spacing;
        return blurred;
    }
    return resample(blurred, out_dims, out_spacing);
}

} // namespace promptmr
