#!/usr/bin/env python3
"""
Smoke test of the entrance-diffusions setup: files, imports, configuration
"""

import os
import sys

REQUIRED_FILES = [
    'main.py',
    'demo.py',
    'config.py',
    'errors.py',
    'numerics.py',
    'processes.py',
    'densities.py',
    'girsanov.py',
    'simulate.py',
    'verify.py',
    'artifacts.py',
    'requirements.txt',
    'README.md',
]

HERE = os.path.dirname(os.path.abspath(__file__))


def test_file_structure():
    """Test that all required files exist"""
    missing_files = [f for f in REQUIRED_FILES if not os.path.exists(os.path.join(HERE, f))]
    assert not missing_files, f"Missing files: {missing_files}"


def test_imports():
    """Test that all modules import and the config is sane"""
    from config import config
    import densities, girsanov, simulate, verify  # noqa: F401

    assert config.ARTIFACT_VERSION
    assert config.get_workers() >= 1
    assert set(verify.CHECKS) >= {"normalization", "fp_residual", "boundary_flux", "limits"}


def test_tolerance_overrides():
    """Test that tolerance overrides win and unknown names are rejected"""
    import pytest
    from config import config
    from errors import ParameterError

    assert config.get_tolerance("normalization") == config.DEFAULT_TOLERANCES["normalization"]
    assert config.get_tolerance("normalization", {"normalization": 1e-3}) == 1e-3
    with pytest.raises(ParameterError):
        config.get_tolerance("nonexistent")


def test_demo_ready(tmp_path):
    """Test that the figure demo can be instantiated"""
    import demo

    figure_demo = demo.FigureDemo(out_dir=str(tmp_path), n_paths=2)
    assert figure_demo.tilde_and_image() is not None
    assert (tmp_path / "fig1_tilde_image.csv").exists()


def main():
    """Run all checks outside pytest"""
    import tempfile
    from pathlib import Path

    print("🔍 Testing entrance-diffusions setup")
    print("=" * 60)

    tests = [
        ("File Structure", test_file_structure),
        ("Imports", test_imports),
        ("Tolerances", test_tolerance_overrides),
        ("Demo Ready", lambda: test_demo_ready(Path(tempfile.mkdtemp()))),
    ]

    passed = 0
    for test_name, test_func in tests:
        print(f"\n📋 Testing {test_name}...")
        try:
            test_func()
            print(f"✅ {test_name} ok")
            passed += 1
        except Exception as e:
            print(f"❌ {test_name} failed: {e}")

    print("\n" + "=" * 60)
    print(f"🏁 Test Results: {passed}/{len(tests)} tests passed")

    if passed == len(tests):
        print("✅ Setup is complete!")
        print("\nNext steps:")
        print("1. Install dependencies: pip install -r requirements.txt")
        print("2. Run the test suite: pytest -m 'not slow'")
        print("3. Run the battery: python main.py verify")
    else:
        print("❌ Some tests failed. Please check the errors above.")

    return passed == len(tests)


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
