# Tests for hrm3d package
