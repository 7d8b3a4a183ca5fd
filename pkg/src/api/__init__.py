# Command-line commands and verification suite
