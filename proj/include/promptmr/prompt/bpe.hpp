// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptmr/core/error.hpp"
#include "promptmr/prompt/template.hpp"

namespace promptmr {

/// Padded token id sequence of fixed context length. First id is the start
/// token; the last non-pad id is the end token; the remainder is zero padding.
struct TokenSequence {
    std::vector<int> ids;

    std::size_t payload_length(int end_id) const {
        for (std::size_t i = ids.size(); i > 0; --i)
            if (ids[i - 1] == end_id) return i;
        throw data_error("TokenSequence: missing end token");
    }
};

namespace bpe_detail {

inline void append_codepoint(std::string& s, std::uint32_t cp) {
    if (cp < 0x80) {
        s.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::uint32_t next_codepoint(const std::string& s, std::size_t& pos) {
    const unsigned char c = static_cast<unsigned char>(s[pos]);
    if (c < 0x80) {
        ++pos;
        return c;
    }
    if ((c >> 5) == 0x6) {
        const std::uint32_t cp = (static_cast<std::uint32_t>(c & 0x1F) << 6) |
                                 (static_cast<unsigned char>(s[pos + 1]) & 0x3F);
        pos += 2;
        return cp;
    }
    const std::uint32_t cp = (static_cast<std::uint32_t>(c & 0x0F) << 12) |
                             ((static_cast<unsigned char>(s[pos + 1]) & 0x3F) << 6) |
                             (static_cast<unsigned char>(s[pos + 2]) & 0x3F);
    pos += 3;
    return cp;
}

/// Reversible byte <-> printable-codepoint map used by byte-level BPE vocab
/// files: printable latin-1 bytes map to themselves, the rest to 256+n.
/// `ordered_syms` lists the symbols in the canonical vocabulary order
/// (printable ranges first, then the remapped bytes), which fixes the id of
/// every single-byte token.
inline void byte_unicode_tables(std::vector<std::string>& byte_to_sym,
                                std::unordered_map<std::uint32_t, unsigned char>& cp_to_byte,
                                std::vector<std::string>& ordered_syms) {
    byte_to_sym.assign(256, {});
    ordered_syms.clear();
    auto printable = [](int b) {
        return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
    };
    auto emit = [&](int b, std::uint32_t cp) {
        std::string sym;
        append_codepoint(sym, cp);
        byte_to_sym[static_cast<std::size_t>(b)] = sym;
        cp_to_byte[cp] = static_cast<unsigned char>(b);
        ordered_syms.push_back(sym);
    };
    for (int b = 0; b < 256; ++b)
        if (printable(b)) emit(b, static_cast<std::uint32_t>(b));
    int n = 0;
    for (int b = 0; b < 256; ++b)
        if (!printable(b)) emit(b, static_cast<std::uint32_t>(256 + n++));
}

inline std::string gunzip_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("bpe: cannot open vocabulary asset: " + path.string());
    std::string compressed((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw data_error("bpe: zlib init failed");
    std::string out;
    out.resize(compressed.size() * 4);
    zs.next_in = reinterpret_cast<Bytef*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    std::size_t written = 0;
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = reinterpret_cast<Bytef*>(out.data() + written);
        zs.avail_out = static_cast<uInt>(out.size() - written);
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw data_error("bpe: corrupt gzip vocabulary asset: " + path.string());
        }
        written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

inline std::uint32_t crc32_of_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("bpe: cannot open: " + path.string());
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        crc = static_cast<std::uint32_t>(
            crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(f.gcount())));
    }
    return crc;
}

} // namespace bpe_detail

/// Byte-pair-encoding tokenizer over the standard published 49,152-entry
/// merge table (gzip text asset). Vocabulary layout: 256 byte symbols,
/// 256 end-of-word byte symbols, 48,894 merge tokens, and the two sequence
/// markers, for 49,408 ids total. Immutable and shareable after load.
class BpeTokenizer {
public:
    static constexpr int kContextLength = 90;
    static constexpr std::uint32_t kAssetCrc32 = 0x2d4a28c0u; // recorded checksum of the gz asset
    static constexpr std::size_t kMergeCount = 48894;

    static BpeTokenizer load(const std::filesystem::path& merges_gz, bool verify_checksum = false) {
        if (verify_checksum) {
            const std::uint32_t crc = bpe_detail::crc32_of_file(merges_gz);
            if (crc != kAssetCrc32)
                throw data_error("bpe: vocabulary asset checksum mismatch (expected 0x2d4a28c0)");
        }
        BpeTokenizer t;
        std::vector<std::string> ordered_syms;
        bpe_detail::byte_unicode_tables(t.byte_to_sym_, t.cp_to_byte_, ordered_syms);

        const std::string text = bpe_detail::gunzip_file(merges_gz);
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t nl = text.find('\n', start);
            if (nl == std::string::npos) nl = text.size();
            lines.push_back(text.substr(start, nl - start));
            start = nl + 1;
        }
        if (lines.size() < 1 + kMergeCount) throw data_error("bpe: vocabulary asset too short");

        // vocab: byte symbols, byte+</w>, merges, specials
        t.id_to_token_.reserve(512 + kMergeCount + 2);
        for (const std::string& s : ordered_syms) t.id_to_token_.push_back(s);
        for (const std::string& s : ordered_syms) t.id_to_token_.push_back(s + "</w>");
        for (std::size_t i = 1; i <= kMergeCount; ++i) {
            const std::string& line = lines[i];
            const std::size_t sp = line.find(' ');
            if (sp == std::string::npos) throw data_error("bpe: malformed merge line " + std::to_string(i));
            const std::string a = line.substr(0, sp);
            const std::string b = line.substr(sp + 1);
            t.merge_ranks_.emplace(a + '\0' + b, static_cast<int>(i - 1));
            t.id_to_token_.push_back(a + b);
        }
        t.id_to_token_.push_back("<|startoftext|>");
        t.id_to_token_.push_back("<|endoftext|>");
        for (std::size_t i = 0; i < t.id_to_token_.size(); ++i)
            t.token_to_id_.emplace(t.id_to_token_[i], static_cast<int>(i));
        return t;
    }

    /// Resolves the asset from $PROMPTMR_ASSETS or the source-tree assets dir.
    static BpeTokenizer load_default() {
        return load(default_asset_path(), true);
    }

    static std::filesystem::path default_asset_path() {
        if (const char* env = std::getenv("PROMPTMR_ASSETS"))
            return std::filesystem::path(env) / "bpe_simple_vocab_16e6.txt.gz";
#ifdef PROMPTMR_SOURCE_ASSET_DIR
        return std::filesystem::path(PROMPTMR_SOURCE_ASSET_DIR) / "bpe_simple_vocab_16e6.txt.gz";
#else
        return std::filesystem::path("assets") / "bpe_simple_vocab_16e6.txt.gz";
#endif
    }

    int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
    int start_id() const { return vocab_size() - 2; }
    int end_id() const { return vocab_size() - 1; }

    /// Encodes cleaned lower-cased text to ids (no start/end markers).
    std::vector<int> encode_text(const std::string& raw) const {
        const std::string text = clean(raw);
        std::vector<int> out;
        std::size_t i = 0;
        while (i < text.size()) {
            const std::string tok = next_pattern_token(text, i);
            if (tok.empty()) continue; // whitespace
            std::string mapped;
            for (unsigned char c : tok) mapped += byte_to_sym_[c];
            for (const std::string& piece : bpe(mapped)) {
                auto it = token_to_id_.find(piece);
                if (it == token_to_id_.end()) throw data_error("bpe: piece not in vocabulary: " + piece);
                out.push_back(it->second);
            }
        }
        return out;
    }

    /// Decodes payload ids (no start/end/pad) back to text. Word boundaries
    /// come from end-of-word markers, so spacing around digits and punctuation
    /// is normalized rather than preserved.
    std::string decode_text(const std::vector<int>& ids) const {
        std::string joined;
        for (int id : ids) {
            if (id < 0 || id >= vocab_size()) throw data_error("bpe: token id out of range: " + std::to_string(id));
            if (id == start_id() || id == end_id()) continue;
            joined += id_to_token_[static_cast<std::size_t>(id)];
        }
        std::string bytes;
        std::size_t pos = 0;
        while (pos < joined.size()) {
            const std::uint32_t cp = bpe_detail::next_codepoint(joined, pos);
            auto it = cp_to_byte_.find(cp);
            if (it == cp_to_byte_.end()) throw data_error("bpe: unmappable codepoint in decode");
            bytes.push_back(static_cast<char>(it->second));
        }
        std::string out;
        for (std::size_t p = 0; p < bytes.size();) {
            if (bytes.compare(p, 4, "</w>") == 0) {
                out.push_back(' ');
                p += 4;
            } else {
                out.push_back(bytes[p]);
                ++p;
            }
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out;
    }

private:
    /// Whitespace runs collapse to single spaces; ASCII lowering.
    static std::string clean(const std::string& s) {
        std::string out;
        bool in_space = true; // strips leading space
        for (char c : s) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!in_space) out.push_back(' ');
                in_space = true;
            } else {
                out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
                in_space = false;
            }
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out;
    }

    static bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }
    static bool is_digit(unsigned char c) { return std::isdigit(c); }

    /// One token of the standard pattern: contraction | letter run |
    /// single digit | punctuation run. Empty return consumes whitespace.
    static std::string next_pattern_token(const std::string& s, std::size_t& i) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            ++i;
            return {};
        }
        if (c == '\'' && i + 1 < s.size()) {
            static const char* kOne = "stmd";
            const char n1 = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i + 1])));
            if (i + 2 < s.size()) {
                const char n2 = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i + 2])));
                if ((n1 == 'r' && n2 == 'e') || (n1 == 'v' && n2 == 'e') || (n1 == 'l' && n2 == 'l')) {
                    std::string tok = s.substr(i, 3);
                    i += 3;
                    return tok;
                }
            }
            for (const char* p = kOne; *p; ++p)
                if (n1 == *p) {
                    std::string tok = s.substr(i, 2);
                    i += 2;
                    return tok;
                }
        }
        if (is_letter(c)) {
            std::size_t j = i;
            while (j < s.size() && is_letter(static_cast<unsigned char>(s[j]))) ++j;
            std::string tok = s.substr(i, j - i);
            i = j;
            return tok;
        }
        if (is_digit(c)) {
            std::string tok = s.substr(i, 1);
            ++i;
            return tok;
        }
        // punctuation run: everything that is not whitespace/letter/digit
        std::size_t j = i;
        while (j < s.size()) {
            const unsigned char cj = static_cast<unsigned char>(s[j]);
            if (std::isspace(cj) || is_letter(cj) || is_digit(cj)) break;
            ++j;
        }
        std::string tok = s.substr(i, j - i);
        i = j;
        return tok;
    }

    /// Greedy lowest-rank merge loop; mirrors the reference implementation's
    /// left-to-right occurrence scan exactly.
    std::vector<std::string> bpe(const std::string& mapped) const {
        std::vector<std::string> word;
        std::size_t pos = 0;
        while (pos < mapped.size()) {
            const std::size_t before = pos;
            bpe_detail::next_codepoint(mapped, pos);
            word.push_back(mapped.substr(before, pos - before));
        }
        if (word.empty()) return word;
        word.back() += "</w>";
        if (word.size() == 1) return word;

        while (true) {
            int best_rank = INT32_MAX;
            std::size_t best = 0;
            for (std::size_t k = 0; k + 1 < word.size(); ++k) {
                auto it = merge_ranks_.find(word[k] + '\0' + word[k + 1]);
                if (it != merge_ranks_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best = k;
                }
            }
            if (best_rank == INT32_MAX) break;
            const std::string first = word[best], second = word[best + 1];
            std::vector<std::string> merged;
            std::size_t i = 0;
            while (i < word.size()) {
                if (word[i] == first && i + 1 < word.size() && word[i + 1] == second) {
                    merged.push_back(first + second);
                    i += 2;
                } else {
                    merged.push_back(word[i]);
                    ++i;
                }
            }
            word = std::move(merged);
            if (word.size() == 1) break;
        }
        return word;
    }

    std::vector<std::string> byte_to_sym_;
    std::unordered_map<std::uint32_t, unsigned char> cp_to_byte_;
    std::unordered_map<std::string, int> merge_ranks_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

/// Start marker + BPE payload + end marker, zero-padded to the context length.
/// Overflow is an error carrying the offending length; imaging parameters are
/// never silently truncated.
inline TokenSequence tokenize(const PromptText& prompt, const BpeTokenizer& tok,
                              int context_length = BpeTokenizer::kContextLength) {
    std::vector<int> payload = tok.encode_text(prompt.text);
    const std::size_t total = payload.size() + 2;
    if (total > static_cast<std::size_t>(context_length))
        throw data_error("tokenize: prompt encodes to " + std::to_string(total) + " tokens, limit " +
                         std::to_string(context_length));
    TokenSequence seq;
    seq.ids.reserve(static_cast<std::size_t>(context_length));
    seq.ids.push_back(tok.start_id());
    seq.ids.insert(seq.ids.end(), payload.begin(), payload.end());
    seq.ids.push_back(tok.end_id());
    seq.ids.resize(static_cast<std::size_t>(context_length), 0);
    return seq;
}

/// Inverse of tokenize modulo whitespace/case normalization.
inline PromptText detokenize(const TokenSequence& seq, const BpeTokenizer& tok) {
    if (seq.ids.empty() || seq.ids.front() != tok.start_id())
        throw data_error("detokenize: sequence must begin with the start token");
    std::vector<int> payload;
    bool ended = false;
    for (std::size_t i = 1; i < seq.ids.size(); ++i) {
        const int id = seq.ids[i];
        if (id == tok.end_id()) {
            ended = true;
            break;
        }
        if (id < 0 || id >= tok.vocab_size())
            throw data_error("detokenize: token id out of range: " + std::to_string(id));
        payload.push_back(id);
    }
    if (!ended) throw data_error("detokenize: missing end token");
    return PromptText{tok.decode_text(payload)};
}

} // namespace promptmr
