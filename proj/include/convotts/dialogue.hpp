#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "convotts/errors.hpp"
#include "convotts/tensor.hpp"

namespace convotts {

enum class Speaker { User, Agent };

inline const char* speaker_name(Speaker s) { return s == Speaker::User ? "User" : "Agent"; }

/// One sentence of a turn: token ids, a mel matrix [frames x M], and the
/// generator's latent style label (absent for external corpora).
struct Sentence {
    std::vector<std::size_t> tokens;
    Tensor mel;  // [frames x mel_dim]
    std::optional<int> style_id;

    bool operator==(const Sentence&) const = default;
};

struct Turn {
    std::size_t index = 0;  // 1-based position within the dialogue
    Speaker speaker = Speaker::User;
    std::vector<Sentence> sentences;

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string id;
    std::vector<Turn> turns;

    bool operator==(const Dialogue&) const = default;
};

/// Speakers must strictly alternate starting with User, indices must run
/// 1..T, the dialogue must end on an Agent turn, and every sentence needs
/// tokens and at least one finite mel frame.
inline void validate_dialogue(const Dialogue& d) {
    auto fail = [&](const std::string& what) {
        throw ValidationError("dialogue '" + d.id + "': " + what);
    };
    if (d.turns.size() < 2) fail("needs at least 2 turns");
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& turn = d.turns[i];
        if (turn.index != i + 1) fail("turn indices must be consecutive from 1");
        const Speaker expected = (i % 2 == 0) ? Speaker::User : Speaker::Agent;
        if (turn.speaker != expected)
            fail("speakers must alternate starting with User (turn " + std::to_string(i + 1) +
                 ")");
        if (turn.sentences.empty()) fail("turn " + std::to_string(i + 1) + " has no sentences");
        for (const Sentence& s : turn.sentences) {
            if (s.tokens.empty()) fail("sentence with no tokens");
            if (s.mel.rows() < 1 || s.mel.rank() != 2) fail("sentence mel must be [frames x M]");
            if (!s.mel.all_finite()) fail("non-finite mel entries");
        }
    }
    if (d.turns.back().speaker != Speaker::Agent) fail("final turn must belong to Agent");
}

/// Length-(C+1)/C padded view of the dialogue at turn t. Slots are Turn
/// pointers; nullptr marks a PAD slot (turn index would be < 1). Prosody
/// slots never include turn t; text slots always do.
struct HistoryWindow {
    std::size_t capacity = 0;      // C
    std::size_t current_turn = 0;  // t
    std::vector<const Turn*> text_slots;     // C+1 entries for turns t-C..t
    std::vector<const Turn*> prosody_slots;  // C entries for turns t-C..t-1

    std::size_t text_pad_count() const {
        std::size_t n = 0;
        for (const Turn* t : text_slots) n += (t == nullptr);
        return n;
    }
};

inline HistoryWindow window(const Dialogue& d, std::size_t t, std::size_t capacity) {
    if (t < 1 || t > d.turns.size()) {
        throw std::out_of_range("turn index " + std::to_string(t) + " outside 1.." +
                                std::to_string(d.turns.size()));
    }
    if (capacity < 1) throw std::invalid_argument("window capacity must be >= 1");
    if (d.turns[t - 1].speaker != Speaker::Agent) {
        throw std::invalid_argument("window target turn " + std::to_string(t) +
                                    " is not an Agent turn");
    }
    HistoryWindow w;
    w.capacity = capacity;
    w.current_turn = t;
    w.text_slots.resize(capacity + 1, nullptr);
    w.prosody_slots.resize(capacity, nullptr);
    for (std::size_t i = 0; i <= capacity; ++i) {
        // slot i holds turn t - C + i, PAD when that index < 1
        const long long turn_index =
            static_cast<long long>(t) - static_cast<long long>(capacity) + static_cast<long long>(i);
        if (turn_index >= 1) w.text_slots[i] = &d.turns[static_cast<std::size_t>(turn_index) - 1];
    }
    for (std::size_t i = 0; i < capacity; ++i) {
        const long long turn_index =
            static_cast<long long>(t) - static_cast<long long>(capacity) + static_cast<long long>(i);
        if (turn_index >= 1)
            w.prosody_slots[i] = &d.turns[static_cast<std::size_t>(turn_index) - 1];
    }
    return w;
}

struct Corpus {
    std::vector<Dialogue> train;
    std::vector<Dialogue> valid;
    std::vector<Dialogue> eval;

    bool operator==(const Corpus&) const = default;
};

}  // namespace convotts
