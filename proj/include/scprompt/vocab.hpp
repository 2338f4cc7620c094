#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "scprompt/common.hpp"

namespace scprompt {

// Token inventory. The language-ID subset drives all prompting operators.
struct VocabSpec {
    std::vector<std::string> tokens;
    int blank_id = 0;
    int sos_id = 1;
    int eos_id = 2;
    std::vector<int> lid_ids;  // sorted ascending

    int size() const { return static_cast<int>(tokens.size()); }

    bool is_lid(int id) const {
        return std::binary_search(lid_ids.begin(), lid_ids.end(), id);
    }

    int id_of(const std::string& token) const {
        for (int i = 0; i < size(); ++i)
            if (tokens[static_cast<std::size_t>(i)] == token) return i;
        throw ConfigError("unknown token '" + token + "'");
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw ConfigError("token id out of range");
        return tokens[static_cast<std::size_t>(id)];
    }

    void validate() const {
        auto in_range = [&](int id) { return id >= 0 && id < size(); };
        if (!in_range(blank_id) || !in_range(sos_id) || !in_range(eos_id))
            throw ConfigError("special token id out of range");
        if (lid_ids.empty()) throw ConfigError("vocab has no language-ID tokens");
        if (!std::is_sorted(lid_ids.begin(), lid_ids.end()))
            throw ConfigError("lid_ids must be sorted");
        for (int id : lid_ids) {
            if (!in_range(id)) throw ConfigError("lid id out of range");
            if (id == blank_id || id == sos_id || id == eos_id)
                throw ConfigError("blank/sos/eos cannot be language IDs");
        }
        std::set<std::string> seen(tokens.begin(), tokens.end());
        if (seen.size() != tokens.size()) throw ConfigError("duplicate tokens in vocab");
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << "scprompt-vocab v1\n";
        for (int i = 0; i < size(); ++i) {
            out << "token " << tokens[static_cast<std::size_t>(i)];
            if (i == blank_id) out << " blank";
            if (i == sos_id) out << " sos";
            if (i == eos_id) out << " eos";
            if (is_lid(i)) out << " lid";
            out << "\n";
        }
        if (!out) throw IoError("write failed for " + path.string());
    }

    static VocabSpec load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read " + path.string());
        std::string line;
        if (!std::getline(in, line) || line != "scprompt-vocab v1")
            throw IoError("bad vocab header in " + path.string());
        VocabSpec v;
        v.blank_id = v.sos_id = v.eos_id = -1;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string kw, tok;
            ls >> kw >> tok;
            if (kw != "token" || tok.empty())
                throw IoError("bad vocab line: " + line);
            const int id = static_cast<int>(v.tokens.size());
            v.tokens.push_back(tok);
            std::string flag;
            while (ls >> flag) {
                if (flag == "blank") v.blank_id = id;
                else if (flag == "sos") v.sos_id = id;
                else if (flag == "eos") v.eos_id = id;
                else if (flag == "lid") v.lid_ids.push_back(id);
                else throw IoError("unknown vocab flag: " + flag);
            }
        }
        v.validate();
        return v;
    }
};

}  // namespace scprompt
