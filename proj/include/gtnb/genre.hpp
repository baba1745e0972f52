// Copyright 2026 The GTNB Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <string>
#include <string_view>

namespace gtnb {

inline constexpr std::size_t kGenreCount = 10;

// The ten AIST++ street-dance genres. Codes are the dataset's three-character
// tags; the two-letter form without the leading 'g' is accepted on input.
inline constexpr std::array<std::string_view, kGenreCount> kGenreCodes{
    "gBR", "gPO", "gLO", "gMH", "gLH", "gHO", "gWA", "gKR", "gJS", "gJB"};

inline constexpr std::array<std::string_view, kGenreCount> kGenreNames{
    "Break", "Pop", "Lock", "Middle Hip-hop", "LA-style Hip-hop",
    "House", "Waack", "Krump", "Street Jazz", "Ballet Jazz"};

struct GenreLabel {
  int id = 0;

  std::string_view code() const;
  static GenreLabel from_id(int id);
  // Throws gtnb::Error for unknown codes.
  static GenreLabel from_code(std::string_view code);
  bool operator==(const GenreLabel&) const = default;
};

}  // namespace gtnb
