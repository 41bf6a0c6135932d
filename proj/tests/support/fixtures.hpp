#pragma once

// Reference strings typed in by hand, so the
// renderers are checked against text they did not produce.

#include <string>

namespace numlab::fixtures {

inline const std::string kDecomposition1201 =
    "Compute with pipeline 1201 plus 1302. Translate from number to decomposition: 1201 = 1 units, 0 tens, "
    "2 hundreds, 1 thousands. Translate from number to decomposition: 1302 = 2 units, 0 tens, 3 hundreds, "
    "1 thousands. Sum 1 units, 0 tens, 2 hundreds, 1 thousands + 2 units, 0 tens, 3 hundreds, 1 thousands = "
    "3 units, 0 tens, 5 hundreds, 2 thousands. Translate from decomposition to number: 3 units, 0 tens, "
    "5 hundreds, 2 thousands = 2503";

inline const std::string kBaseline1201 = "Compute 1201 plus 1302. Final result = 2503";

inline const std::string kSpaced1201 = "Compute 1201 plus 1302. 1 2 0 1 plus 1 3 0 2 = 2 5 0 3. Final result = 2503";

// Few-shot addition prompt for the query (n1, n2); line breaks as in the
// source listing, including the trailing space after each step line.
inline std::string fewshot_addition(const std::string& n1, const std::string& n2) {
  return "This application makes an arithmetic operation decomposing the input numbers.\n"
         "###\n"
         "Compute with pipeline 28 plus 39. \n"
         "Translate from number to decomposition: 28 = 2 tens, 8 units. \n"
         "Translate from number to decomposition: 39 = 3 tens, 9 units. \n"
         "Sum 8 units, 2 tens + 9 units, 3 tens = 7 units, 6 tens. \n"
         "Translate from decomposition to number: 6 tens, 7 units = 67\n"
         "###\n"
         "Compute with pipeline 804 plus 121. \n"
         "Translate from number to decomposition: 804 = 8 hundreds, 0 tens, 4 units. \n"
         "Translate from number to decomposition: 121 = 1 hundreds, 2 tens, 1 units. \n"
         "Sum 4 units, 0 tens, 8 hundreds + 1 units, 2 tens, 1 hundreds = 5 units, 2 tens, 9 hundreds. \n"
         "Translate from decomposition to number: 9 hundreds, 2 tens, 5 units = 925\n"
         "###\n"
         "Compute with pipeline 1201 plus 1302. \n"
         "Translate from number to decomposition: 1201 = 1 thousands, 2 hundreds, 0 tens, 1 units. \n"
         "Translate from number to decomposition: 1302 = 1 thousands, 3 hundreds, 0 tens, 2 units. \n"
         "Sum 1 units, 0 tens, 2 hundreds, 1 thousands + 2 units, 0 tens, 3 hundreds, 1 thousands = 3 units, 0 tens, "
         "5 hundreds, 2 thousands. \n"
         "Translate from decomposition to number: 2 thousands, 5 hundreds, 0 tens, 3 units = 2503\n"
         "###\n"
         "Compute with pipeline 97734 plus 86328. \n"
         "Translate from number to decomposition: 97734 = 9 tens of thousands, 7 thousands, 7 hundreds, 3 tens, "
         "4 units. \n"
         "Translate from number to decomposition: 86328 = 8 tens of thousands, 6 thousands, 3 hundreds, 2 tens, "
         "8 units. \n"
         "Sum 4 units, 3 tens, 7 hundreds, 7 thousands, 9 tens of thousands + 8 units, 2 tens, 3 hundreds, "
         "6 thousands, 8 tens of thousands = 2 units, 6 tens, 0 hundreds, 4 thousands, 8 tens of thousands, "
         "1 hundreds of thousands. \n"
         "Translate from decomposition to number: 1 hundreds of thousands, 8 tens of thousands, 4 thousands, "
         "0 hundreds, 6 tens, 2 units = 184062\n"
         "### Compute with pipeline " +
         n1 + " plus " + n2 + ".";
}

}  // namespace numlab::fixtures
