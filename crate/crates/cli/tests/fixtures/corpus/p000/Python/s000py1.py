# sum solution 1
n, y = map(int, input().split())
print(n + y)
