// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <string>

#include "promptmr/prompt/metadata.hpp"

namespace promptmr {

/// Rendered prompt. Exactly two brace-delimited groups: the first carries the
/// voxel size, the second the {TR, TE, TI, FA} parameter block.
struct PromptText {
    std::string text;

    void validate() const {
        int opens = 0, closes = 0;
        int depth = 0;
        for (char c : text) {
            if (c == '{') {
                ++opens;
                if (++depth > 1) throw data_error("PromptText: nested braces");
            } else if (c == '}') {
                ++closes;
                if (--depth < 0) throw data_error("PromptText: unbalanced braces");
            }
        }
        if (opens != 2 || closes != 2) throw data_error("PromptText: expected exactly two brace groups");
    }
};

/// Canonical prompt template (frozen; retrieval tests depend on exact wording):
///
///   A <age>-year-old <female|male> subject; target <modality>;
///   voxel {<vx>, <vy>, <vz>} mm; parameters {<TR>, <TE>, <TI|None>, <FA>};
///   scanner <scanner> at <B0> T.
///
/// Numeric formatting contract: age/field strength 1 decimal, voxel size
/// 2 decimals (mm), TR/TE/TI 1 decimal (ms), FA rounded to integer degrees.
/// A missing TI renders as the literal "None". Prompts are unique across
/// metadata that differ by at least one step of this precision grid.
inline PromptText build_prompt(const ScanMetadata& meta) {
    meta.validate();
    char buf[512];
    char ti[32];
    if (meta.ti_ms)
        std::snprintf(ti, sizeof(ti), "%.1f", *meta.ti_ms);
    else
        std::snprintf(ti, sizeof(ti), "None");
    std::snprintf(buf, sizeof(buf),
                  "A %.1f-year-old %s subject; target %s; voxel {%.2f, %.2f, %.2f} mm; "
                  "parameters {%.1f, %.1f, %s, %lld}; scanner %s at %.1f T.",
                  meta.age_years, meta.sex == Sex::F ? "female" : "male", modality_name(meta.modality),
                  meta.voxel_mm[0], meta.voxel_mm[1], meta.voxel_mm[2], meta.tr_ms, meta.te_ms, ti,
                  static_cast<long long>(std::llround(meta.fa_deg)), meta.scanner.c_str(),
                  meta.field_strength_T);
    PromptText p{std::string(buf)};
    p.validate();
    return p;
}

/// The seven fixed modality-name prompts used for image-to-modality retrieval.
inline PromptText modality_prompt(Modality m) { return PromptText{modality_name(m)}; }

} // namespace promptmr
