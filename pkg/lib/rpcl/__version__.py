__title__ = 'rpcl'
__description__ = 'Reward and Policy Concurrent Learning for classic control tasks'
__url__ = 'https://github.com/dskrypa/rpcl'
__version__ = '2026.10.18-1'
__author__ = 'Doug Skrypa'
__author_email__ = 'dskrypa@gmail.com'
__copyright__ = 'Copyright 2026 Doug Skrypa'
