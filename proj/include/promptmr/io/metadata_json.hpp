// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "promptmr/core/error.hpp"
#include "promptmr/prompt/metadata.hpp"

namespace promptmr {

inline nlohmann::ordered_json metadata_to_json(const ScanMetadata& m) {
    nlohmann::ordered_json j;
    j["age_years"] = m.age_years;
    j["sex"] = sex_code(m.sex);
    j["field_strength_T"] = m.field_strength_T;
    j["scanner"] = m.scanner;
    j["voxel_mm"] = m.voxel_mm;
    j["tr_ms"] = m.tr_ms;
    j["te_ms"] = m.te_ms;
    if (m.ti_ms)
        j["ti_ms"] = *m.ti_ms;
    else
        j["ti_ms"] = nullptr;
    j["fa_deg"] = m.fa_deg;
    j["modality"] = modality_name(m.modality);
    return j;
}

inline ScanMetadata metadata_from_json(const nlohmann::json& j) {
    try {
        ScanMetadata m;
        m.age_years = j.at("age_years").get<double>();
        m.sex = sex_from_code(j.at("sex").get<std::string>());
        m.field_strength_T = j.at("field_strength_T").get<double>();
        m.scanner = j.at("scanner").get<std::string>();
        const auto& v = j.at("voxel_mm");
        if (!v.is_array() || v.size() != 3) throw data_error("metadata: voxel_mm must be a 3-array");
        for (int i = 0; i < 3; ++i) m.voxel_mm[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)].get<double>();
        m.tr_ms = j.at("tr_ms").get<double>();
        m.te_ms = j.at("te_ms").get<double>();
        if (!j.at("ti_ms").is_null()) m.ti_ms = j.at("ti_ms").get<double>();
        m.fa_deg = j.at("fa_deg").get<double>();
        m.modality = modality_from_name(j.at("modality").get<std::string>());
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("metadata: malformed JSON sidecar: ") + e.what());
    }
}

inline void write_metadata(const std::filesystem::path& path, const ScanMetadata& m) {
    std::ofstream f(path);
    if (!f) throw data_error("metadata: cannot open for writing: " + path.string());
    f << metadata_to_json(m).dump(2) << '\n';
}

inline ScanMetadata read_metadata(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw data_error("metadata: cannot open: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("metadata: parse error in ") + path.string() + ": " + e.what());
    }
    return metadata_from_json(j);
}

} // namespace promptmr
