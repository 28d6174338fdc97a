#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "convotts/dialogue.hpp"
#include "convotts/errors.hpp"
#include "json.hpp"

namespace convotts {

// On-disk corpus layout: a directory holding train.jsonl / valid.jsonl /
// eval.jsonl, one dialogue per line:
//   {"id": ..., "turns": [{"speaker": "User"|"Agent",
//                          "sentences": [{"tokens": [int...],
//                                         "mel": [[float; M]...],
//                                         "style_id"?: int}]}]}
// Turn indices are positional and not serialized.

namespace detail {

inline nlohmann::json dialogue_to_json(const Dialogue& d) {
    nlohmann::json turns = nlohmann::json::array();
    for (const Turn& turn : d.turns) {
        nlohmann::json sentences = nlohmann::json::array();
        for (const Sentence& s : turn.sentences) {
            nlohmann::json js;
            js["tokens"] = s.tokens;
            nlohmann::json mel = nlohmann::json::array();
            for (std::size_t r = 0; r < s.mel.rows(); ++r) {
                nlohmann::json row = nlohmann::json::array();
                for (std::size_t c = 0; c < s.mel.cols(); ++c) row.push_back(s.mel.at(r, c));
                mel.push_back(std::move(row));
            }
            js["mel"] = std::move(mel);
            if (s.style_id) js["style_id"] = *s.style_id;
            sentences.push_back(std::move(js));
        }
        nlohmann::json jt;
        jt["speaker"] = speaker_name(turn.speaker);
        jt["sentences"] = std::move(sentences);
        turns.push_back(std::move(jt));
    }
    nlohmann::json jd;
    jd["id"] = d.id;
    jd["turns"] = std::move(turns);
    return jd;
}

inline Dialogue dialogue_from_json(const nlohmann::json& jd, std::size_t line) {
    auto malformed = [line](const std::string& what) { throw ParseError(what, line); };
    if (!jd.is_object() || !jd.contains("id") || !jd.contains("turns"))
        malformed("dialogue object needs 'id' and 'turns'");
    if (!jd["id"].is_string()) malformed("'id' must be a string");
    if (!jd["turns"].is_array()) malformed("'turns' must be an array");

    Dialogue d;
    d.id = jd["id"].get<std::string>();
    std::size_t index = 0;
    for (const auto& jt : jd["turns"]) {
        if (!jt.is_object() || !jt.contains("speaker") || !jt.contains("sentences"))
            malformed("turn object needs 'speaker' and 'sentences'");
        Turn turn;
        turn.index = ++index;
        const std::string speaker = jt["speaker"].is_string() ? jt["speaker"].get<std::string>()
                                                              : std::string();
        if (speaker == "User")
            turn.speaker = Speaker::User;
        else if (speaker == "Agent")
            turn.speaker = Speaker::Agent;
        else
            malformed("speaker must be 'User' or 'Agent'");
        if (!jt["sentences"].is_array()) malformed("'sentences' must be an array");
        for (const auto& js : jt["sentences"]) {
            if (!js.is_object() || !js.contains("tokens") || !js.contains("mel"))
                malformed("sentence object needs 'tokens' and 'mel'");
            Sentence s;
            if (!js["tokens"].is_array()) malformed("'tokens' must be an array");
            for (const auto& tok : js["tokens"]) {
                if (!tok.is_number_integer() || tok.get<long long>() < 0)
                    malformed("token ids must be non-negative integers");
                s.tokens.push_back(tok.get<std::size_t>());
            }
            const auto& jmel = js["mel"];
            if (!jmel.is_array() || jmel.empty()) malformed("'mel' must be a nonempty matrix");
            const std::size_t cols = jmel[0].is_array() ? jmel[0].size() : 0;
            if (cols == 0) malformed("'mel' rows must be nonempty arrays");
            Tensor mel({jmel.size(), cols});
            for (std::size_t r = 0; r < jmel.size(); ++r) {
                if (!jmel[r].is_array() || jmel[r].size() != cols)
                    malformed("'mel' rows must all have the same width");
                for (std::size_t c = 0; c < cols; ++c) {
                    if (!jmel[r][c].is_number()) malformed("'mel' entries must be numbers");
                    mel.at(r, c) = jmel[r][c].get<double>();
                }
            }
            s.mel = std::move(mel);
            if (js.contains("style_id")) {
                if (!js["style_id"].is_number_integer())
                    malformed("'style_id' must be an integer");
                s.style_id = js["style_id"].get<int>();
            }
            turn.sentences.push_back(std::move(s));
        }
        d.turns.push_back(std::move(turn));
    }
    return d;
}

inline void save_split(const std::vector<Dialogue>& split, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    for (const Dialogue& d : split) out << dialogue_to_json(d).dump() << '\n';
}

inline std::vector<Dialogue> load_split(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot read " + file.string());
    std::vector<Dialogue> split;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) throw ParseError("blank line in " + file.filename().string(), line_no);
        nlohmann::json jd;
        try {
            jd = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON in ") + file.filename().string() + ": " +
                                 e.what(),
                             line_no);
        }
        Dialogue d = dialogue_from_json(jd, line_no);
        validate_dialogue(d);
        split.push_back(std::move(d));
    }
    if (split.empty())
        throw ParseError("no dialogues in " + file.filename().string(), line_no);
    return split;
}

}  // namespace detail

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::save_split(corpus.train, dir / "train.jsonl");
    detail::save_split(corpus.valid, dir / "valid.jsonl");
    detail::save_split(corpus.eval, dir / "eval.jsonl");
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
    Corpus corpus;
    corpus.train = detail::load_split(dir / "train.jsonl");
    corpus.valid = detail::load_split(dir / "valid.jsonl");
    corpus.eval = detail::load_split(dir / "eval.jsonl");
    return corpus;
}

}  // namespace convotts
