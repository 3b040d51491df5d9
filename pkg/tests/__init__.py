# Tests package for czleak
