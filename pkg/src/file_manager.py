#!/usr/bin/env python3
"""
File Manager Module

This module persists command results: JSON verdicts and flows, CSV error
curves, and a YAML sidecar describing the run that produced them.
"""

import json
import logging
import os
import re
from datetime import datetime

import pandas as pd
import yaml

logger = logging.getLogger(__name__)


class FileManager:
    """
    A class that manages result files inside one output directory.

    Existing files are never overwritten; a numeric suffix is added instead.
    """

    def __init__(self, output_dir="results"):
        """
        Initialize the file manager.

        Args:
            output_dir (str): Directory to save result files.
        """
        self.output_dir = output_dir
        self._create_directory(output_dir)

    def _create_directory(self, directory):
        """
        Create a directory if it doesn't exist.

        Args:
            directory (str): Directory path

        Returns:
            bool: True if directory exists or was created, False otherwise
        """
        try:
            if not os.path.exists(directory):
                os.makedirs(directory)
                logger.info(f"Created directory: {directory}")
            return True
        except OSError as e:
            logger.error(f"Error creating directory {directory}: {str(e)}")
            return False

    def _sanitize_filename(self, filename):
        """
        Make a filename filesystem-safe.

        Args:
            filename (str): Filename to sanitize

        Returns:
            str: Sanitized filename
        """
        sanitized = re.sub(r'[\\/*?:"<>|]', '_', filename).replace(' ', '_')
        if not sanitized or sanitized in ('.', '..'):
            sanitized = 'result'
        return sanitized[:200]

    def _unique_path(self, filename):
        filepath = os.path.join(self.output_dir, self._sanitize_filename(filename))
        if os.path.exists(filepath):
            base, ext = os.path.splitext(filepath)
            counter = 1
            while os.path.exists(filepath):
                filepath = f"{base}_{counter}{ext}"
                counter += 1
        return filepath

    def save_json(self, data, filename):
        """
        Save a JSON document in the output directory.

        Args:
            data: JSON-serialisable object
            filename (str): Target file name

        Returns:
            str: Path to the saved file, or None if failed
        """
        try:
            filepath = self._unique_path(filename)
            with open(filepath, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2, sort_keys=True)
                f.write('\n')
            logger.info(f"Saved JSON file: {filepath}")
            return filepath
        except (OSError, TypeError) as e:
            logger.error(f"Error saving JSON {filename}: {str(e)}")
            return None

    def save_csv(self, frame: pd.DataFrame, filename):
        """Save a results table without the index column."""
        try:
            filepath = self._unique_path(filename)
            frame.to_csv(filepath, index=False)
            logger.info(f"Saved CSV file: {filepath} ({len(frame)} rows)")
            return filepath
        except OSError as e:
            logger.error(f"Error saving CSV {filename}: {str(e)}")
            return None

    def save_metadata(self, command, options, filename='run.yaml'):
        """
        Record how a result was produced.

        Args:
            command (str): Sub-command name
            options (dict): Effective options (flags after environment defaults)
            filename (str, optional): Target file name

        Returns:
            str: Path to the saved file, or None if failed
        """
        metadata = {
            'command': command,
            'options': options,
            'date_run': datetime.now().isoformat(),
        }
        try:
            filepath = self._unique_path(filename)
            with open(filepath, 'w', encoding='utf-8') as f:
                yaml.safe_dump(metadata, f, default_flow_style=False, sort_keys=True)
            logger.info(f"Saved run metadata: {filepath}")
            return filepath
        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Error saving metadata {filename}: {str(e)}")
            return None
