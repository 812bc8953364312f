// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>

#include "promptmr/core/error.hpp"

namespace promptmr {

enum class Modality { T1w, T2w, FLAIR, PD, T1CE, SWI, T2star };

constexpr std::array<Modality, 7> kAllModalities = {Modality::T1w, Modality::T2w, Modality::FLAIR,
                                                    Modality::PD,  Modality::T1CE, Modality::SWI,
                                                    Modality::T2star};

inline const char* modality_name(Modality m) {
    switch (m) {
    case Modality::T1w: return "T1w";
    case Modality::T2w: return "T2w";
    case Modality::FLAIR: return "FLAIR";
    case Modality::PD: return "PD";
    case Modality::T1CE: return "T1CE";
    case Modality::SWI: return "SWI";
    case Modality::T2star: return "T2star";
    }
    return "?";
}

inline Modality modality_from_name(const std::string& s) {
    for (Modality m : kAllModalities)
        if (s == modality_name(m)) return m;
    throw data_error("unknown modality: " + s);
}

/// Acquisition parameters of one sequence. TI is meaningful only for the
/// inversion-recovery FLAIR sequence.
struct SequenceParams {
    Modality modality = Modality::T1w;
    double tr_ms = 0;
    double te_ms = 0;
    std::optional<double> ti_ms;
    double fa_deg = 90.0;
    double field_strength_T = 3.0;
    std::string scanner;
    std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};

    void validate() const {
        if (!(tr_ms > 0)) throw data_error("SequenceParams: tr_ms must be positive");
        if (te_ms < 0) throw data_error("SequenceParams: te_ms must be nonnegative");
        if (!(te_ms < tr_ms)) throw data_error("SequenceParams: te_ms must be < tr_ms");
        if (!(fa_deg > 0 && fa_deg <= 180)) throw data_error("SequenceParams: fa_deg must be in (0, 180]");
        if (!(field_strength_T > 0)) throw data_error("SequenceParams: field strength must be positive");
        for (double v : voxel_mm)
            if (!(v > 0)) throw data_error("SequenceParams: voxel_mm must be positive");
        const bool is_ir = modality == Modality::FLAIR;
        if (is_ir && !ti_ms) throw data_error("SequenceParams: FLAIR requires ti_ms");
        if (!is_ir && ti_ms) throw data_error("SequenceParams: ti_ms only valid for FLAIR");
        if (ti_ms && !(*ti_ms > 0)) throw data_error("SequenceParams: ti_ms must be positive");
    }
};

} // namespace promptmr
