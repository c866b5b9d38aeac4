#pragma once

#include <string>
#include <vector>

#include "camannot/timeutil.hpp"
#include "support.hpp"

namespace testing {

struct SyntheticLabel {
  const char* raw;
  const char* intensity;
};

/// Compendium-style labels, including a misspelled near-duplicate and
/// labels the evaluation excludes (sleep, trivial).
inline const std::vector<SyntheticLabel>& synthetic_labels() {
  static const std::vector<SyntheticLabel> labels = {
      {"occupation;11580 office work/computer work general", "SB"},
      {"occupation;11580 office wok/computer work general", "SB"},
      {"leisure;9060 sitting meeting or talking with others", "SB"},
      {"walking;17270 walking the dog", "LIPA"},
      {"household;5060 shopping miscellaneous", "LIPA"},
      {"running;12150 running", "MVPA"},
      {"lawn and garden;8120 mowing lawn", "MVPA"},
      {"7030 sleeping", "Sleep"},
      {"uncodeable", "Unknown"},
  };
  return labels;
}

/// Writes <dir>/annotations.csv, dictionary.csv, participants.csv,
/// prompts.json, sweep.json and images/<participant>/<n>.ppm.
inline void write_synthetic_study(const std::string& dir, int n_participants = 5, int images_per_participant = 14) {
  const auto& labels = synthetic_labels();
  std::string dict = "raw_label,intensity,source,reason\n";
  for (const auto& l : labels) {
    if (std::string(l.intensity) == "Unknown") continue;
    dict += std::string("\"") + l.raw + "\"," + l.intensity + ",2011,\n";
  }
  write_text(dir + "/dictionary.csv", dict);

  std::string ann = "participant_id,timestamp,raw_label,image_ref\n";
  std::string people = "id,age,sex\n";
  // The evaluated classes take turns so every participant sees all three.
  const int cycle[] = {0, 3, 5, 1, 4, 6, 2, 3, 5, 0, 7, 8};
  for (int p = 0; p < n_participants; ++p) {
    const std::string pid = "P" + std::to_string(p + 1);
    people += pid + "," + std::to_string(30 + 3 * p) + "," + (p % 2 ? "M" : "F") + "\n";
    const camannot::UnixSeconds start = 1'400'000'000 + 86'400 * p;
    for (int i = 0; i < images_per_participant; ++i) {
      const auto& l = labels[static_cast<std::size_t>(cycle[(i + p) % 12])];
      const std::string ref = "images/" + pid + "/" + std::to_string(i) + ".ppm";
      ann += pid + "," + camannot::format_iso8601(start + 20 * i + (i > 8 ? 600 : 0)) + ",\"" + l.raw + "\"," + ref + "\n";
      write_ppm(dir + "/" + ref, 8, 6, [p, i](int x, int y, int c) {
        return static_cast<std::uint8_t>((x * 23 + y * 41 + c * 60 + i * 17 + p * 5) % 256);
      });
    }
  }
  write_text(dir + "/annotations.csv", ann);
  write_text(dir + "/participants.csv", people);

  write_text(dir + "/prompts.json", R"([
  {"id": "objects", "text": "Based on the objects in the image, what is the person likely doing?", "source": "curated"},
  {"id": "activity", "text": "What activity is the person doing?", "source": "curated"},
  {"id": "llm-intensity", "text": "Describe how physically active the person is.", "source": "llm-suggested"}
]
)");
  write_text(dir + "/sweep.json", R"({
  "pipeline": "generative",
  "n": 5,
  "seed": 7,
  "space": {
    "mapping_approach": ["direct", "via_clean"],
    "new_tokens": [5, 10, 20, 40],
    "reword_labels": [true, false],
    "prompt": ["objects", "activity", "llm-intensity"]
  }
}
)");
}

}  // namespace testing
