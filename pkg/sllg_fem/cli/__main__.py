"""
Main module for sllg_fem.cli package.
"""
import sllg_fem.cli

if __name__ == "__main__":
    sllg_fem.cli.run()  # pylint: disable=no-value-for-parameter
